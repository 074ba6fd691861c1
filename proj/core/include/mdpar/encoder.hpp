#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mdpar/ops.hpp"
#include "mdpar/tensor.hpp"

namespace mdpar {

// Pre-norm transformer encoder layer: x + Attn(LN(x)), then x + MLP(LN(x)).
// Attention projections carry no bias; the MLP expands d -> 4d -> d.
struct EncoderLayer {
  int heads = 1;
  Tensor wq, wk, wv, wo;              // [d x d] each
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

enum class QueryMode { LEARNABLE, EXTERNAL_FILE, NONE };

QueryMode parse_query_mode(const std::string& s);
const char* query_mode_name(QueryMode m);

// Per-dataset attribute query tokens. EXTERNAL_FILE queries stay frozen; the
// optional input projection (present when d_ext != d) is trainable.
struct AttributeQuerySet {
  std::string dataset_id;
  QueryMode mode = QueryMode::LEARNABLE;
  Tensor queries;           // [C x d] (LEARNABLE/NONE) or [C x d_ext] frozen
  Tensor input_projection;  // [d_ext x d], defined only when projecting

  int attribute_count() const { return queries.dim(0); }
};

EncoderLayer make_encoder_layer(int dim, int heads, RngState& rng);

// Builds the query set for one dataset. LEARNABLE draws seeded Gaussian
// vectors (sigma 0.02); NONE allocates zero-initialized trainable slots;
// EXTERNAL_FILE loads frozen vectors from `path` (see read_embedding_file).
AttributeQuerySet build_attribute_queries(
    const std::string& dataset_id, int attribute_count, int dim,
    QueryMode mode, RngState& rng,
    const std::optional<std::string>& path = std::nullopt);

// The [C x d] tokens actually fed into the fusion layer (applies the input
// projection for external embeddings when one exists).
Tensor effective_queries(const AttributeQuerySet& queries);

Tensor encoder_layer_forward(const Tensor& x, const EncoderLayer& layer);

// Runs the first L-1 layers over visual tokens alone. Independent of every
// attribute query set by construction.
Tensor encode_visual(const Tensor& f_vis0,
                     const std::vector<EncoderLayer>& pre_fusion_layers);

struct FusedOutput {
  Tensor visual;      // [n x d]
  Tensor attributes;  // [C x d], one token per attribute in query order
};

// Concatenates [F_vis ; T_attr] (visual first) and runs the final layer with
// full bidirectional attention, then splits the output segments.
FusedOutput fuse(const Tensor& f_vis, const AttributeQuerySet& queries,
                 const EncoderLayer& final_layer);

// Binary attribute-embedding matrix: 8-byte header of two little-endian
// uint32 (C, d_ext), then C*d_ext float32 values, row-major.
Tensor read_embedding_file(const std::string& path, int expected_rows);
void write_embedding_file(const std::string& path, const Tensor& matrix);

}  // namespace mdpar

#include "mdpar/encoder.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mdpar/errors.hpp"

namespace mdpar {

QueryMode parse_query_mode(const std::string& s) {
  if (s == "learnable") return QueryMode::LEARNABLE;
  if (s == "external_file") return QueryMode::EXTERNAL_FILE;
  if (s == "none") return QueryMode::NONE;
  throw ConfigError("unknown query mode '" + s +
                    "' (expected learnable|external_file|none)");
}

const char* query_mode_name(QueryMode m) {
  switch (m) {
    case QueryMode::LEARNABLE: return "learnable";
    case QueryMode::EXTERNAL_FILE: return "external_file";
    case QueryMode::NONE: return "none";
  }
  return "?";
}

EncoderLayer make_encoder_layer(int dim, int heads, RngState& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("encoder layer: dim " + std::to_string(dim) +
                      " not divisible by head count " + std::to_string(heads));
  }
  EncoderLayer l;
  l.heads = heads;
  l.wq = Tensor::gaussian({dim, dim}, rng, 0.02, true);
  l.wk = Tensor::gaussian({dim, dim}, rng, 0.02, true);
  l.wv = Tensor::gaussian({dim, dim}, rng, 0.02, true);
  l.wo = Tensor::gaussian({dim, dim}, rng, 0.02, true);
  l.mlp_w1 = Tensor::gaussian({dim, 4 * dim}, rng, 0.02, true);
  l.mlp_b1 = Tensor::zeros({4 * dim}, true);
  l.mlp_w2 = Tensor::gaussian({4 * dim, dim}, rng, 0.02, true);
  l.mlp_b2 = Tensor::zeros({dim}, true);
  l.ln1_gain = Tensor::full({dim}, Scalar{1}, true);
  l.ln1_bias = Tensor::zeros({dim}, true);
  l.ln2_gain = Tensor::full({dim}, Scalar{1}, true);
  l.ln2_bias = Tensor::zeros({dim}, true);
  return l;
}

AttributeQuerySet build_attribute_queries(
    const std::string& dataset_id, int attribute_count, int dim,
    QueryMode mode, RngState& rng, const std::optional<std::string>& path) {
  if (attribute_count < 1) {
    throw ConfigError("attribute queries: dataset '" + dataset_id +
                      "' must declare at least one attribute");
  }
  AttributeQuerySet qs;
  qs.dataset_id = dataset_id;
  qs.mode = mode;
  switch (mode) {
    case QueryMode::LEARNABLE:
      qs.queries = Tensor::gaussian({attribute_count, dim}, rng, 0.02, true);
      break;
    case QueryMode::NONE:
      // Query slots without text semantics: trainable, zero start.
      qs.queries = Tensor::zeros({attribute_count, dim}, true);
      break;
    case QueryMode::EXTERNAL_FILE: {
      if (!path) {
        throw ConfigError("attribute queries: dataset '" + dataset_id +
                          "' uses external_file mode but no file is set");
      }
      qs.queries = read_embedding_file(*path, attribute_count);
      qs.queries.set_requires_grad(false);  // frozen
      const int d_ext = qs.queries.dim(1);
      if (d_ext != dim) {
        qs.input_projection = Tensor::gaussian({d_ext, dim}, rng, 0.02, true);
      }
      break;
    }
  }
  return qs;
}

Tensor effective_queries(const AttributeQuerySet& queries) {
  if (queries.input_projection.defined()) {
    return matmul(queries.queries, queries.input_projection);
  }
  return queries.queries;
}

namespace {

Tensor attention(const Tensor& x, const EncoderLayer& layer) {
  const int dim = x.dim(1);
  const int heads = layer.heads;
  const int head_dim = dim / heads;
  const Scalar scale_factor =
      Scalar{1} / static_cast<Scalar>(std::sqrt(static_cast<double>(head_dim)));
  Tensor q = matmul(x, layer.wq);
  Tensor k = matmul(x, layer.wk);
  Tensor v = matmul(x, layer.wv);
  std::vector<Tensor> contexts;
  contexts.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * head_dim, head_dim);
    Tensor kh = slice_cols(k, h * head_dim, head_dim);
    Tensor vh = slice_cols(v, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose(kh)), scale_factor);
    Tensor attn = softmax_rows(scores);
    contexts.push_back(matmul(attn, vh));
  }
  return matmul(concat_cols(contexts), layer.wo);
}

Tensor mlp(const Tensor& x, const EncoderLayer& layer) {
  Tensor h = gelu(add_rows(matmul(x, layer.mlp_w1), layer.mlp_b1));
  return add_rows(matmul(h, layer.mlp_w2), layer.mlp_b2);
}

constexpr Scalar kLnEps = Scalar{1e-5};

}  // namespace

Tensor encoder_layer_forward(const Tensor& x, const EncoderLayer& layer) {
  if (x.rank() != 2 || x.dim(1) != layer.wq.dim(0)) {
    throw ShapeError("encoder layer: tokens " + shape_str(x.shape()) +
                     " do not match layer width " +
                     std::to_string(layer.wq.dim(0)));
  }
  Tensor a = add(
      x, attention(layer_norm(x, layer.ln1_gain, layer.ln1_bias, kLnEps),
                   layer));
  return add(a,
             mlp(layer_norm(a, layer.ln2_gain, layer.ln2_bias, kLnEps), layer));
}

Tensor encode_visual(const Tensor& f_vis0,
                     const std::vector<EncoderLayer>& pre_fusion_layers) {
  if (pre_fusion_layers.empty()) {
    throw ConfigError(
        "encode_visual: phased split needs L >= 2 (no pre-fusion layers)");
  }
  Tensor x = f_vis0;
  for (const auto& layer : pre_fusion_layers) x = encoder_layer_forward(x, layer);
  return x;
}

FusedOutput fuse(const Tensor& f_vis, const AttributeQuerySet& queries,
                 const EncoderLayer& final_layer) {
  Tensor t_attr = effective_queries(queries);
  if (t_attr.dim(0) < 1) {
    throw ConfigError("fuse: empty attribute query set for dataset '" +
                      queries.dataset_id + "'");
  }
  if (t_attr.dim(1) != f_vis.dim(1)) {
    throw ShapeError("fuse: query width " + shape_str(t_attr.shape()) +
                     " does not match visual width " +
                     shape_str(f_vis.shape()));
  }
  const int n = f_vis.dim(0);
  const int c = t_attr.dim(0);
  Tensor fused = encoder_layer_forward(concat_rows({f_vis, t_attr}),
                                       final_layer);
  FusedOutput out;
  out.visual = slice_rows(fused, 0, n);
  out.attributes = slice_rows(fused, n, c);
  return out;
}

Tensor read_embedding_file(const std::string& path, int expected_rows) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file '" + path + "'");
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  if (!in) throw IoError("embedding file '" + path + "' truncated header");
  if (static_cast<int>(rows) != expected_rows) {
    throw DataError("embedding file '" + path + "' has " +
                    std::to_string(rows) + " rows, expected " +
                    std::to_string(expected_rows));
  }
  if (cols < 1) {
    throw DataError("embedding file '" + path + "' declares zero columns");
  }
  std::vector<float> raw(static_cast<size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in) throw CorruptionError("embedding file '" + path + "' truncated");
  std::vector<Scalar> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    data[i] = static_cast<Scalar>(raw[i]);
  return Tensor::from_data({static_cast<int>(rows), static_cast<int>(cols)},
                           std::move(data));
}

void write_embedding_file(const std::string& path, const Tensor& matrix) {
  if (matrix.rank() != 2) {
    throw ShapeError("embedding file: matrix must be 2-D, got " +
                     shape_str(matrix.shape()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file '" + path + "'");
  const std::uint32_t rows = static_cast<std::uint32_t>(matrix.dim(0));
  const std::uint32_t cols = static_cast<std::uint32_t>(matrix.dim(1));
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  for (Scalar v : matrix.data()) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw IoError("failed writing embedding file '" + path + "'");
}

}  // namespace mdpar

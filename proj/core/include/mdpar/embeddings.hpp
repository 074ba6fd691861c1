#pragma once

#include <map>
#include <vector>

#include "mdpar/modality.hpp"
#include "mdpar/ops.hpp"
#include "mdpar/tensor.hpp"

namespace mdpar {

// A frame stack's token sequences: one [n_patches x d] matrix per frame.
using FrameTokens = std::vector<Tensor>;

// Modality-specific patch-embedding stem. Stems for different modalities
// share no parameters.
struct ModalityStem {
  ModalityKind modality = ModalityKind::RGB;
  int patch_size = 16;
  int channels = 3;
  Tensor projection;  // [(P*P*ch) x d]
  Tensor bias;        // [d]
};

struct PositionalTables {
  Tensor e_spat;                        // [n_patches x d]
  Tensor e_temp;                        // [t_max x d]
  std::map<ModalityKind, Tensor> e_mod;  // [d] per auxiliary modality
  int t_max = 1;
};

// Compresses T per-position tokens into one via concat -> linear -> GELU ->
// linear. Output token count equals the per-frame patch count for any T.
struct TimeAdapter {
  int frames = 1;
  int hidden = 0;
  Tensor w1;  // [(T*d) x h]
  Tensor b1;  // [h]
  Tensor w2;  // [h x d]
  Tensor b2;  // [d]
};

ModalityStem make_stem(ModalityKind modality, int patch_size, int channels,
                       int dim, RngState& rng);
PositionalTables make_positional_tables(int n_patches, int t_max, int dim,
                                        const std::vector<ModalityKind>& mods,
                                        RngState& rng);
TimeAdapter make_time_adapter(int frames, int dim, int hidden, RngState& rng);

// Splits frames[T x ch x H x W] into non-overlapping P x P patches in
// row-major order (top-left first) and projects each to d dimensions.
FrameTokens patch_embed(const Tensor& frames, const ModalityStem& stem);

// token[t, i] += E_spat[i]; += E_temp[t] when T > 1; += E_mod for auxiliary
// modalities. Single-frame RGB receives the spatial table only.
FrameTokens add_positional(const FrameTokens& tokens,
                           const PositionalTables& tables,
                           ModalityKind modality);

// T == 1 bypasses the adapter unchanged; otherwise the T tokens at each
// spatial index are concatenated and compressed to a single d-vector.
Tensor apply_time_adapter(const FrameTokens& tokens, const TimeAdapter& adapter);

}  // namespace mdpar

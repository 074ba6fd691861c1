#include "mdpar/embeddings.hpp"

#include <cmath>

#include "mdpar/errors.hpp"

namespace mdpar {

namespace {

// Gathers frame t of frames[T x ch x H x W] into an [n_patches x (P*P*ch)]
// matrix, one row per patch in row-major grid order. Row layout is
// (channel, patch_y, patch_x), matching the [ch x H x W] frame layout.
Tensor extract_patches(const Tensor& frames, int t, int channels, int height,
                       int width, int patch) {
  const int gh = height / patch, gw = width / patch;
  const int n = gh * gw;
  const int row_len = patch * patch * channels;
  std::vector<std::size_t> src(static_cast<size_t>(n) * row_len);
  std::vector<Scalar> out(src.size());
  auto df = frames.data();
  std::size_t w = 0;
  for (int pr = 0; pr < gh; ++pr)
    for (int pc = 0; pc < gw; ++pc)
      for (int c = 0; c < channels; ++c)
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px) {
            const int y = pr * patch + py, x = pc * patch + px;
            const std::size_t idx =
                ((static_cast<size_t>(t) * channels + c) * height + y) * width +
                x;
            src[w] = idx;
            out[w] = df[idx];
            ++w;
          }
  Tensor r = Tensor::from_data({n, row_len}, std::move(out));
  if (grad_enabled() && frames.requires_grad()) {
    auto* self = r.impl().get();
    auto* pf = frames.impl().get();
    auto impl = r.impl();
    impl->requires_grad = true;
    impl->parents.push_back(frames.impl());
    impl->backward_fn = [self, pf, src = std::move(src)] {
      const auto& g = self->pass_grad;
      auto gf = pf->pass_buffer();
      for (std::size_t i = 0; i < src.size(); ++i) gf[src[i]] += g[i];
    };
  }
  return r;
}

}  // namespace

ModalityStem make_stem(ModalityKind modality, int patch_size, int channels,
                       int dim, RngState& rng) {
  ModalityStem stem;
  stem.modality = modality;
  stem.patch_size = patch_size;
  stem.channels = channels;
  stem.projection = Tensor::gaussian({patch_size * patch_size * channels, dim},
                                     rng, 0.02, true);
  stem.bias = Tensor::zeros({dim}, true);
  return stem;
}

PositionalTables make_positional_tables(int n_patches, int t_max, int dim,
                                        const std::vector<ModalityKind>& mods,
                                        RngState& rng) {
  PositionalTables tables;
  tables.t_max = t_max;
  tables.e_spat = Tensor::gaussian({n_patches, dim}, rng, 0.02, true);
  tables.e_temp = Tensor::gaussian({std::max(t_max, 1), dim}, rng, 0.02, true);
  for (ModalityKind m : mods) {
    if (is_auxiliary(m) && !tables.e_mod.count(m)) {
      tables.e_mod.emplace(m, Tensor::gaussian({dim}, rng, 0.02, true));
    }
  }
  return tables;
}

TimeAdapter make_time_adapter(int frames, int dim, int hidden, RngState& rng) {
  TimeAdapter a;
  a.frames = frames;
  a.hidden = hidden;
  a.w1 = Tensor::gaussian({frames * dim, hidden}, rng, 0.02, true);
  a.b1 = Tensor::zeros({hidden}, true);
  a.w2 = Tensor::gaussian({hidden, dim}, rng, 0.02, true);
  a.b2 = Tensor::zeros({dim}, true);
  return a;
}

FrameTokens patch_embed(const Tensor& frames, const ModalityStem& stem) {
  if (frames.rank() != 4) {
    throw ShapeError("patch_embed: frames must be [T x ch x H x W], got " +
                     shape_str(frames.shape()));
  }
  const int t_count = frames.dim(0), channels = frames.dim(1);
  const int height = frames.dim(2), width = frames.dim(3);
  const int patch = stem.patch_size;
  if (channels != stem.channels) {
    throw ConfigError("patch_embed: stem expects " +
                      std::to_string(stem.channels) + " channels, got " +
                      std::to_string(channels));
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("patch_embed: H=" + std::to_string(height) +
                      ", W=" + std::to_string(width) +
                      " not divisible by patch size P=" +
                      std::to_string(patch));
  }
  FrameTokens tokens;
  tokens.reserve(static_cast<size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    Tensor patches = extract_patches(frames, t, channels, height, width, patch);
    tokens.push_back(add_rows(matmul(patches, stem.projection), stem.bias));
  }
  return tokens;
}

FrameTokens add_positional(const FrameTokens& tokens,
                           const PositionalTables& tables,
                           ModalityKind modality) {
  const int t_count = static_cast<int>(tokens.size());
  if (t_count == 0) throw ShapeError("add_positional: empty token list");
  if (t_count > tables.t_max) {
    throw ConfigError("add_positional: T=" + std::to_string(t_count) +
                      " exceeds configured T_max=" +
                      std::to_string(tables.t_max));
  }
  const int n = tokens[0].dim(0);
  if (n != tables.e_spat.dim(0)) {
    throw ShapeError("add_positional: token count " + std::to_string(n) +
                     " does not match spatial table rows " +
                     std::to_string(tables.e_spat.dim(0)));
  }
  FrameTokens out;
  out.reserve(tokens.size());
  const int dim = tables.e_spat.dim(1);
  for (int t = 0; t < t_count; ++t) {
    Tensor x = add(tokens[static_cast<size_t>(t)], tables.e_spat);
    if (t_count > 1) {
      Tensor row = reshape(slice_rows(tables.e_temp, t, 1), {dim});
      x = add_rows(x, row);
    }
    if (is_auxiliary(modality)) {
      auto it = tables.e_mod.find(modality);
      if (it == tables.e_mod.end()) {
        throw RoutingError(std::string("add_positional: no modality embedding "
                                       "registered for '") +
                           modality_name(modality) + "'");
      }
      x = add_rows(x, it->second);
    }
    out.push_back(std::move(x));
  }
  return out;
}

Tensor apply_time_adapter(const FrameTokens& tokens,
                          const TimeAdapter& adapter) {
  const int t_count = static_cast<int>(tokens.size());
  if (t_count == 0) throw ShapeError("apply_time_adapter: empty token list");
  if (t_count == 1) return tokens[0];
  if (t_count != adapter.frames) {
    throw ConfigError("apply_time_adapter: adapter configured for T=" +
                      std::to_string(adapter.frames) + ", got T=" +
                      std::to_string(t_count));
  }
  Tensor cat = concat_cols(tokens);  // [n x (T*d)]
  Tensor hidden = gelu(add_rows(matmul(cat, adapter.w1), adapter.b1));
  return add_rows(matmul(hidden, adapter.w2), adapter.b2);
}

}  // namespace mdpar

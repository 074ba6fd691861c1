#pragma once

#include <string>

#include "mdpar/errors.hpp"

namespace mdpar {

enum class ModalityKind { RGB, VIDEO, EVENT };

// Auxiliary modalities carry a learned modality-type embedding; RGB is the
// base modality and its embedding is fixed at zero.
inline bool is_auxiliary(ModalityKind m) { return m == ModalityKind::EVENT; }

inline const char* modality_name(ModalityKind m) {
  switch (m) {
    case ModalityKind::RGB: return "rgb";
    case ModalityKind::VIDEO: return "video";
    case ModalityKind::EVENT: return "event";
  }
  return "?";
}

inline ModalityKind parse_modality(const std::string& s) {
  if (s == "rgb") return ModalityKind::RGB;
  if (s == "video") return ModalityKind::VIDEO;
  if (s == "event") return ModalityKind::EVENT;
  throw ConfigError("unknown modality '" + s + "' (expected rgb|video|event)");
}

}  // namespace mdpar

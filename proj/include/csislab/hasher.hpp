#pragma once

#include <memory>

#include "csislab/hash_types.hpp"
#include "csislab/image.hpp"
#include "csislab/image_io.hpp"
#include "csislab/pdq.hpp"
#include "csislab/surrogate.hpp"

namespace csislab {

/// Immutable hash function built from a spec; cheap to copy and safe to
/// share between threads.
class Hasher {
 public:
  explicit Hasher(const HashFunctionSpec& spec = HashFunctionSpec::pdq()) : spec_(spec) {
    spec_.validate();
    if (spec_.kind == HashKind::SurrogateProjection) surrogate_ = std::make_shared<const SurrogateHasher>(spec_);
  }

  const HashFunctionSpec& spec() const noexcept { return spec_; }
  std::size_t bits() const noexcept { return spec_.output_bits; }
  bool is_pdq() const noexcept { return spec_.kind == HashKind::Pdq; }

  const SurrogateHasher& surrogate() const {
    require(surrogate_ != nullptr, ErrorCode::InvalidArgument, "hasher is not a surrogate");
    return *surrogate_;
  }

  PerceptualHash operator()(const LumaImage& image) const {
    if (is_pdq()) return pdq::hash(image);
    return surrogate_->hash(image);
  }

  /// Decoded files hash from their native 0..255 luma plane under PDQ.
  PerceptualHash operator()(const DecodedImage& image) const {
    if (is_pdq()) {
      return pdq::quantize(pdq::features_from_file_luma255(image.luma255, image.luma.width, image.luma.height));
    }
    return surrogate_->hash(image.luma);
  }

 private:
  HashFunctionSpec spec_;
  std::shared_ptr<const SurrogateHasher> surrogate_;
};

}  // namespace csislab

#pragma once

#include <cstdint>
#include <vector>

#include "hfshield/image.hpp"

namespace hfshield {

// Procedural face-like identity: ellipse head on a textured background,
// two eyes and a mouth, all parameterized from the identity seed. Rendering
// is a pure function of the seed, so the dataset is reproducible bit-exactly.
struct IdentitySpec {
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
};

struct IdentityData {
  IdentitySpec spec;
  std::vector<Image> originals;   // the user's images to protect (N_db = 4)
  std::vector<Image> references;  // held-out images for the surrogate (4)
};

// render image j (0..7) of the identity; small seeded pose/color jitter per j
Image render_identity_image(const IdentitySpec& spec, std::size_t j);

std::vector<IdentityData> generate_dataset(std::size_t n_identities, std::uint64_t seed,
                                           std::size_t image_size = 32);

}  // namespace hfshield

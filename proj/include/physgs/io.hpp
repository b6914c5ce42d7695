#pragma once

#include "physgs/camera.hpp"
#include "physgs/gaussians.hpp"
#include "physgs/metrics.hpp"
#include "physgs/mpm/solver.hpp"
#include "physgs/propagate.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace physgs::io {

namespace fs = std::filesystem;

/// Raised for unreadable, unwritable or malformed files.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Zeroth-order spherical harmonic constant used by the PLY color field.
inline constexpr double kShC0 = 0.28209479177387814;

/// Reads a splat PLY (binary little-endian or ASCII). Unknown vertex
/// properties are ignored; missing or non-finite fields raise FormatError
/// naming the vertex.
std::vector<GaussianKernel> load_splats(const fs::path& path);
/// Writes binary little-endian float32 PLY with the rendered covariance.
void save_splats(std::span<const GaussianKernel> kernels, const fs::path& path);

/// 8-bit PNG. Loaded values are scaled to [0, 1]; an alpha channel is kept.
Image read_png(const fs::path& path);
/// Channels 1, 3 or 4, values clamped to [0, 1] and rounded to 8 bits.
void write_png(const Image& image, const fs::path& path);

/// Portable float map, little-endian, rows stored bottom-to-top.
Image read_pfm(const fs::path& path);
void write_pfm(const Image& image, const fs::path& path);

/// Writes frame_{index:04}_color.png, _depth.pfm and _alpha.pfm under `directory`.
void write_frame(const RenderOutput& frame, const fs::path& directory, int index);
fs::path frame_path(const fs::path& directory, int index, const std::string& channel);

struct ParticleDump {
    double time = 0.0;
    std::vector<mpm::Particle> particles;
};
void write_particles(std::span<const mpm::Particle> particles, double time, const fs::path& path);
ParticleDump read_particles(const fs::path& path);

/// Float32 tensor with a layer tag.
struct FeatureTensor {
    std::vector<std::uint64_t> dims;
    std::string tag;
    std::vector<float> data;

    [[nodiscard]] std::size_t element_count() const;
};
void write_tensor(const FeatureTensor& tensor, const fs::path& path);
FeatureTensor read_tensor(const fs::path& path);
/// Rank-2 (tokens x d) or rank-3 (rows x cols x d) tensor to a token matrix.
propagate::Tokens to_tokens(const FeatureTensor& tensor);
FeatureTensor from_tokens(const propagate::Tokens& tokens, const std::vector<std::uint64_t>& dims,
                          const std::string& tag);

Camera read_camera(const fs::path& path);
void write_camera(const Camera& camera, const fs::path& path);

/// CSV with a header row "model,<scene>,..." and one row per model.
metrics::ScoreTable read_scores(const fs::path& path);
void write_scores(const metrics::ScoreTable& table, const fs::path& path);

/// Ensures `path`'s parent directory exists; throws FormatError when it cannot be created.
void ensure_parent(const fs::path& path);

} // namespace physgs::io

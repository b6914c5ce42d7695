#pragma once

#include "physgs/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace physgs::propagate {

/// Token matrix: one row per spatial location (row-major over the grid), d columns.
using Tokens = Eigen::MatrixXd;

/// Per-pixel alpha * fg + (1 - alpha) * bg. `alpha` has one channel and must lie in [0, 1].
Image blend(const Image& foreground, const Image& alpha, const Image& background);

struct AttentionResult {
    Tokens output;
    Eigen::MatrixXd weights; ///< row-stochastic n_q x n_k
};

/// softmax(Q K^T / sqrt(d)) V.
Tokens attention(const Tokens& q, const Tokens& k, const Tokens& v, Exec exec = Exec::Parallel);
AttentionResult attention_with_weights(const Tokens& q, const Tokens& k, const Tokens& v,
                                       Exec exec = Exec::Parallel);

/// Attention of `q` against the keyframe blocks k[0..K) and v[0..K) as if they
/// were concatenated row-wise. Blocks are never materialized together.
Tokens extended_attention(const Tokens& q, std::span<const Tokens> keys, std::span<const Tokens> values,
                          Exec exec = Exec::Parallel);

/// Enhanced output for every keyframe: coarse queries and keys, enhanced values.
std::vector<Tokens> extended_attention_all(std::span<const Tokens> coarse_q, std::span<const Tokens> coarse_k,
                                           std::span<const Tokens> enhanced_v, Exec exec = Exec::Parallel);

/// 1 - cos(a, b); 1 when either vector is zero.
double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct NnOptions {
    /// Chebyshev search radius in grid cells; negative searches the full grid.
    int window = -1;
    /// Grid width in tokens; required when `window` >= 0.
    int grid_width = 0;
    Exec exec = Exec::Parallel;
};

/// For every row of `frame`, the index of the nearest row of `key` under
/// cosine distance, ties broken by the smallest index.
std::vector<std::int64_t> nn_correspondence(const Tokens& frame, const Tokens& key, const NnOptions& options = {});

/// Sorted 1-indexed keyframe indices of an N-frame sequence.
struct KeyframeSet {
    std::vector<int> frames;
    int total = 0;

    [[nodiscard]] bool contains(int j) const;
    /// Largest keyframe <= j.
    [[nodiscard]] int previous(int j) const;
    /// Smallest keyframe > j, if any.
    [[nodiscard]] std::optional<int> next(int j) const;
    void validate() const;
};

/// One keyframe per consecutive window of `interval` frames plus frame 1,
/// drawn with a seeded generator.
KeyframeSet select_keyframes(int total, int interval, std::uint64_t seed);

/// Weight of the following keyframe for frame j between keyframes prev < j < next.
using WeightFn = std::function<double(int j, int prev, int next)>;
double linear_weight(int j, int prev, int next);

struct CorrespondenceField {
    int frame = 0;
    int prev = 0;
    std::optional<int> next;
    std::vector<std::int64_t> nu_prev;
    std::vector<std::int64_t> nu_next;
    /// Weight of the following keyframe; 0 in single-neighbor mode.
    double weight = 0.0;
};

/// Keyframe-indexed token maps.
using KeyframeTokens = std::map<int, Tokens>;

/// Correspondences from frame j's coarse tokens to its neighboring keyframes.
CorrespondenceField correspondence(int j, const KeyframeSet& keys, const Tokens& coarse_frame,
                                   const KeyframeTokens& coarse_keys, const NnOptions& options = {},
                                   const WeightFn& weight = linear_weight);

/// w * next[nu_next[q]] + (1 - w) * prev[nu_prev[q]], evaluated as prev + w (next - prev);
/// keyframes pass through unchanged.
Tokens propagate(int j, const KeyframeSet& keys, const KeyframeTokens& enhanced, const CorrespondenceField& field);

struct InjectionSchedule {
    double tau_features = 0.8;
    double tau_attention = 0.8;
    int sampling_steps = 50;
    int inversion_steps = 1000;
    int inversion_stride = 20;
    double guidance_inversion = 1.0;
    double guidance_coarse = 7.5;
    double guidance_enhanced = 7.5;
    int keyframe_interval = 5;

    void validate() const;
};

struct InjectionGate {
    bool inject_features = false;
    bool inject_attention = false;
};

/// Gate for sampling step `step` (0-based) of `total`; decoder layers only.
InjectionGate injection_gate(int step, int total, const InjectionSchedule& schedule);

enum class Stage { Coarse, Enhanced };

struct FeatureMap {
    int frame = 0;
    int rows = 0;
    int cols = 0;
    std::string layer;
    Stage stage = Stage::Coarse;
    Tokens tokens; ///< rows*cols x d

    [[nodiscard]] int dim() const { return static_cast<int>(tokens.cols()); }
    void validate() const;
};

/// Hook points a model host exposes in each decoder layer.
enum class HookPoint { ResidualOut, AttnQ, AttnK, AttnV, AttnOut };
const char* hook_name(HookPoint hook);

struct TapKey {
    int layer = 0;
    int step = 0;
    HookPoint hook = HookPoint::ResidualOut;
    auto operator<=>(const TapKey&) const = default;
};

/// Host-side callback interface. The host calls `observe` with every hooked
/// activation of a frame; returning a value replaces the activation.
class LayerTap {
public:
    virtual ~LayerTap() = default;
    virtual std::optional<Tokens> observe(int frame, const TapKey& key, const Tokens& activation) = 0;
};

/// Records coarse-pass activations and replays them on the enhanced pass
/// according to an injection schedule.
class FeatureBank : public LayerTap {
public:
    explicit FeatureBank(InjectionSchedule schedule) : schedule_(schedule) {}

    /// Recording mode stores activations; replay mode substitutes them.
    void set_recording(bool recording) { recording_ = recording; }
    std::optional<Tokens> observe(int frame, const TapKey& key, const Tokens& activation) override;

    [[nodiscard]] const Tokens* find(int frame, const TapKey& key) const;
    [[nodiscard]] std::size_t size() const { return store_.size(); }

private:
    InjectionSchedule schedule_;
    bool recording_ = true;
    std::map<std::pair<int, TapKey>, Tokens> store_;
};

} // namespace physgs::propagate

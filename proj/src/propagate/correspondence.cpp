#include "physgs/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace physgs::propagate {

Image blend(const Image& foreground, const Image& alpha, const Image& background)
{
    if (!foreground.same_shape(background)) {
        throw Error("blend: foreground and background dimensions differ");
    }
    if (alpha.channels != 1 || alpha.width != foreground.width || alpha.height != foreground.height) {
        throw Error("blend: alpha must be a single-channel map matching the frame");
    }
    Image out = foreground;
    const int c = foreground.channels;
    for (std::size_t p = 0; p < alpha.pixel_count(); ++p) {
        const double a = alpha.data[p];
        if (!(a >= 0.0 && a <= 1.0)) {
            throw Error("blend: alpha outside [0, 1] at pixel " + std::to_string(p));
        }
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            out.data[i] = a * foreground.data[i] + (1.0 - a) * background.data[i];
        }
    }
    return out;
}

double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b)
{
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        return 1.0;
    }
    return 1.0 - a.dot(b) / (na * nb);
}

std::vector<std::int64_t> nn_correspondence(const Tokens& frame, const Tokens& key, const NnOptions& options)
{
    if (frame.cols() != key.cols()) {
        throw Error("nn_correspondence: token dimensions differ");
    }
    if (key.rows() == 0) {
        throw Error("nn_correspondence: empty keyframe grid");
    }
    const bool windowed = options.window >= 0;
    if (windowed && (options.grid_width <= 0 || frame.rows() % options.grid_width != 0 ||
                     key.rows() != frame.rows())) {
        throw Error("nn_correspondence: a windowed search needs equal grids and a grid width that divides them");
    }
    const Eigen::VectorXd key_norm = key.rowwise().norm();
    const Eigen::VectorXd frame_norm = frame.rowwise().norm();
    std::vector<std::int64_t> out(static_cast<std::size_t>(frame.rows()));
    const Eigen::Index n = frame.rows();
    const int w = std::max(options.grid_width, 1);
    const int h = static_cast<int>(key.rows() / w);

    const auto dist = [&](Eigen::Index q, Eigen::Index s) {
        if (frame_norm(q) == 0.0 || key_norm(s) == 0.0) {
            return 1.0;
        }
        return 1.0 - frame.row(q).dot(key.row(s)) / (frame_norm(q) * key_norm(s));
    };

#pragma omp parallel for schedule(static) if (options.exec == Exec::Parallel)
    for (Eigen::Index q = 0; q < n; ++q) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        if (windowed) {
            const int qx = static_cast<int>(q % w);
            const int qy = static_cast<int>(q / w);
            // Scanning rows then columns visits candidates in increasing linear index.
            for (int y = std::max(0, qy - options.window); y <= std::min(h - 1, qy + options.window); ++y) {
                for (int x = std::max(0, qx - options.window); x <= std::min(w - 1, qx + options.window); ++x) {
                    const Eigen::Index s = static_cast<Eigen::Index>(y) * w + x;
                    const double d = dist(q, s);
                    if (d < best) {
                        best = d;
                        arg = s;
                    }
                }
            }
        } else {
            for (Eigen::Index s = 0; s < key.rows(); ++s) {
                const double d = dist(q, s);
                if (d < best) {
                    best = d;
                    arg = s;
                }
            }
        }
        out[static_cast<std::size_t>(q)] = arg;
    }
    return out;
}

bool KeyframeSet::contains(int j) const { return std::binary_search(frames.begin(), frames.end(), j); }

int KeyframeSet::previous(int j) const
{
    auto it = std::upper_bound(frames.begin(), frames.end(), j);
    if (it == frames.begin()) {
        throw Error("keyframe set: no keyframe at or before frame " + std::to_string(j));
    }
    return *std::prev(it);
}

std::optional<int> KeyframeSet::next(int j) const
{
    auto it = std::upper_bound(frames.begin(), frames.end(), j);
    if (it == frames.end()) {
        return std::nullopt;
    }
    return *it;
}

void KeyframeSet::validate() const
{
    if (total < 1) {
        throw Error("keyframe set: frame count must be positive");
    }
    if (frames.empty() || frames.front() != 1) {
        throw Error("keyframe set: frame 1 must be a keyframe");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i] < 1 || frames[i] > total) {
            throw Error("keyframe set: frame " + std::to_string(frames[i]) + " out of range");
        }
        if (i > 0 && frames[i] <= frames[i - 1]) {
            throw Error("keyframe set: frames must be strictly increasing");
        }
    }
}

KeyframeSet select_keyframes(int total, int interval, std::uint64_t seed)
{
    if (total < 1) {
        throw Error("select_keyframes: frame count must be positive");
    }
    if (interval < 1) {
        throw Error("select_keyframes: interval must be positive");
    }
    KeyframeSet set;
    set.total = total;
    set.frames.push_back(1);
    if (interval >= total) {
        return set;
    }
    std::mt19937_64 rng(seed);
    for (int start = 1; start <= total; start += interval) {
        const int end = std::min(total, start + interval - 1);
        std::uniform_int_distribution<int> pick(start, end);
        set.frames.push_back(pick(rng));
    }
    std::sort(set.frames.begin(), set.frames.end());
    set.frames.erase(std::unique(set.frames.begin(), set.frames.end()), set.frames.end());
    return set;
}

double linear_weight(int j, int prev, int next) { return static_cast<double>(j - prev) / (next - prev); }

CorrespondenceField correspondence(int j, const KeyframeSet& keys, const Tokens& coarse_frame,
                                   const KeyframeTokens& coarse_keys, const NnOptions& options,
                                   const WeightFn& weight)
{
    CorrespondenceField f;
    f.frame = j;
    f.prev = keys.previous(j);
    const auto lookup = [&](int k) -> const Tokens& {
        auto it = coarse_keys.find(k);
        if (it == coarse_keys.end()) {
            throw Error("correspondence: missing coarse features for keyframe " + std::to_string(k));
        }
        return it->second;
    };
    if (keys.contains(j)) {
        return f;
    }
    f.nu_prev = nn_correspondence(coarse_frame, lookup(f.prev), options);
    f.next = keys.next(j);
    if (f.next) {
        f.nu_next = nn_correspondence(coarse_frame, lookup(*f.next), options);
        f.weight = weight(j, f.prev, *f.next);
    }
    return f;
}

Tokens propagate(int j, const KeyframeSet& keys, const KeyframeTokens& enhanced, const CorrespondenceField& field)
{
    const auto lookup = [&](int k) -> const Tokens& {
        auto it = enhanced.find(k);
        if (it == enhanced.end()) {
            throw Error("propagate: missing enhanced output for keyframe " + std::to_string(k));
        }
        return it->second;
    };
    if (keys.contains(j)) {
        return lookup(j);
    }
    if (field.frame != j) {
        throw Error("propagate: correspondence field belongs to frame " + std::to_string(field.frame));
    }
    const Tokens& prev = lookup(field.prev);
    const auto n = static_cast<Eigen::Index>(field.nu_prev.size());
    Tokens out(n, prev.cols());
    if (!field.next) {
        for (Eigen::Index q = 0; q < n; ++q) {
            out.row(q) = prev.row(field.nu_prev[q]);
        }
        return out;
    }
    const Tokens& next = lookup(*field.next);
    const double w = field.weight;
    for (Eigen::Index q = 0; q < n; ++q) {
        // Written as a correction of the past lookup so equal inputs return that input exactly.
        const auto past = prev.row(field.nu_prev[q]);
        out.row(q) = past + w * (next.row(field.nu_next[q]) - past);
    }
    return out;
}

} // namespace physgs::propagate

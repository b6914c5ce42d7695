#include "physgs/propagate.hpp"

namespace physgs::propagate {

void InjectionSchedule::validate() const
{
    if (!(tau_features > 0.0 && tau_features < 1.0) || !(tau_attention > 0.0 && tau_attention < 1.0)) {
        throw ValidationError("injection schedule: tau values must lie in (0, 1)");
    }
    if (sampling_steps < 1 || inversion_steps < 1 || inversion_stride < 1) {
        throw ValidationError("injection schedule: step counts must be positive");
    }
    if (keyframe_interval < 1) {
        throw ValidationError("injection schedule: keyframe interval must be positive");
    }
}

InjectionGate injection_gate(int step, int total, const InjectionSchedule& schedule)
{
    if (total < 1 || step < 0 || step >= total) {
        throw Error("injection_gate: step out of range");
    }
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return {t < schedule.tau_features, t < schedule.tau_attention};
}

void FeatureMap::validate() const
{
    if (tokens.cols() <= 0) {
        throw Error("feature map: token dimension must be positive");
    }
    if (rows <= 0 || cols <= 0 || tokens.rows() != static_cast<Eigen::Index>(rows) * cols) {
        throw Error("feature map: token count does not match the grid");
    }
}

const char* hook_name(HookPoint hook)
{
    switch (hook) {
    case HookPoint::ResidualOut:
        return "residual-out";
    case HookPoint::AttnQ:
        return "attn-q";
    case HookPoint::AttnK:
        return "attn-k";
    case HookPoint::AttnV:
        return "attn-v";
    case HookPoint::AttnOut:
        return "attn-out";
    }
    return "unknown";
}

std::optional<Tokens> FeatureBank::observe(int frame, const TapKey& key, const Tokens& activation)
{
    if (recording_) {
        store_[{frame, key}] = activation;
        return std::nullopt;
    }
    const InjectionGate gate = injection_gate(key.step, schedule_.sampling_steps, schedule_);
    const bool wanted = key.hook == HookPoint::ResidualOut ? gate.inject_features
                      : (key.hook == HookPoint::AttnQ || key.hook == HookPoint::AttnK) ? gate.inject_attention
                                                                                       : false;
    if (!wanted) {
        return std::nullopt;
    }
    const Tokens* saved = find(frame, key);
    if (saved == nullptr) {
        return std::nullopt;
    }
    return *saved;
}

const Tokens* FeatureBank::find(int frame, const TapKey& key) const
{
    auto it = store_.find({frame, key});
    return it == store_.end() ? nullptr : &it->second;
}

} // namespace physgs::propagate

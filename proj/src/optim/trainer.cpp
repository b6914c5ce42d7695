#include "params_chain.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace physgs::optim {

double TrainSchedule::lr_scale(int epoch) const { return epoch > decay_epoch ? decay_factor : 1.0; }

bool TrainSchedule::hard_depth_active(int epoch) const
{
    return epoch > depth_start && depth_every > 0 && epoch % depth_every == 0;
}

void TrainSchedule::validate() const
{
    std::string errors;
    const auto check = [&](bool ok, const char* msg) {
        if (!ok) {
            errors += errors.empty() ? "" : "; ";
            errors += msg;
        }
    };
    check(epochs >= 0, "epochs must be non-negative");
    check(depth_start < epochs || epochs == 0, "hard-depth start must precede the last epoch");
    check(depth_every > 0, "hard-depth cadence must be positive");
    check(patch_size > 0, "patch size must be positive");
    check(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    check(lambda_dssim >= 0.0, "lambda must be non-negative");
    check(decay_factor > 0.0, "decay factor must be positive");
    check(normalization_eps > 0.0, "normalization epsilon must be positive");
    check(lr.position >= 0.0 && lr.opacity >= 0.0 && lr.scale >= 0.0 && lr.rotation >= 0.0 && lr.color >= 0.0,
          "learning rates must be non-negative");
    if (!errors.empty()) {
        throw ValidationError("train schedule: " + errors);
    }
}

Trainer::Trainer(std::span<const GaussianKernel> kernels, std::vector<SupervisionView> views, TrainSchedule schedule,
                 RenderSettings settings)
    : base_(kernels.begin(), kernels.end()), initial_(to_params(kernels)), params_(initial_), views_(std::move(views)), schedule_(schedule), settings_(settings)
{
    schedule_.validate();
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        kernels[i].validate(i);
    }
    int inputs = 0;
    for (std::size_t v = 0; v < views_.size(); ++v) {
        if (views_[v].is_input_view) {
            ++inputs;
            input_ = v;
        }
    }
    if (inputs != 1) {
        throw ValidationError("exactly one supervision view must be the input view (found " +
                              std::to_string(inputs) + ")");
    }
    if (views_[input_].image.empty()) {
        throw ValidationError("the input view has no image");
    }

    if (!kernels.empty()) {
        Vec3 lo = kernels[0].center;
        Vec3 hi = lo;
        for (const auto& k : kernels) {
            lo = lo.cwiseMin(k.center);
            hi = hi.cwiseMax(k.center);
        }
        const double half = 0.5 * (hi - lo).norm();
        extent_ = half > 0.0 ? half : 1.0;
    }
}

const SupervisionView& Trainer::input_view() const { return views_[input_]; }

std::vector<GaussianKernel> Trainer::kernels() const
{
    const auto same = [](const auto& a, const auto& b) {
        return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
    };
    std::vector<GaussianKernel> out;
    out.reserve(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const SplatParams& p = params_[k];
        const SplatParams& q = initial_[k];
        const bool frozen = std::memcmp(&p.opacity_logit, &q.opacity_logit, sizeof(double)) == 0 &&
                            same(p.log_scale, q.log_scale) && same(p.rotation, q.rotation) && same(p.color, q.color);
        if (frozen) {
            GaussianKernel kernel = base_[k];
            kernel.center = p.center;
            out.push_back(kernel);
        } else {
            out.push_back(to_kernel(p));
        }
    }
    return out;
}

double Trainer::color_step(double lr_scale)
{
    const ColorLoss loss = color_loss(params_, views_[input_], schedule_.lambda_dssim, settings_);
    if (!std::isfinite(loss.value)) {
        throw DivergenceError("color loss is not finite", 0, kernels());
    }
    const LearningRates& lr = schedule_.lr;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        SplatParams& p = params_[k];
        const ParamGrad& g = loss.grad[k];
        p.center -= lr_scale * lr.position * extent_ * g.center;
        p.opacity_logit -= lr_scale * lr.opacity * g.opacity_logit;
        p.log_scale -= lr_scale * lr.scale * g.log_scale;
        p.rotation -= lr_scale * lr.rotation * g.rotation;
        p.color = (p.color - lr_scale * lr.color * g.color).cwiseMax(0.0).cwiseMin(1.0);
    }
    return loss.value;
}

double Trainer::hard_depth_step(double lr_scale)
{
    // Kernels are rebuilt once so the frozen fields stay bit-identical; only centers move.
    std::vector<GaussianKernel> current = kernels();
    const HardDepthLoss loss = hard_depth_loss(current, views_, schedule_, settings_);
    if (!std::isfinite(loss.value)) {
        throw DivergenceError("hard-depth loss is not finite", 0, std::move(current));
    }
    const double step = lr_scale * schedule_.lr.position * extent_;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        params_[k].center -= step * loss.center_grad[k];
    }
    return loss.value;
}

EpochRecord Trainer::run_epoch(int epoch)
{
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_scale = schedule_.lr_scale(epoch);
    try {
        rec.color_loss = color_step(rec.lr_scale);
        if (schedule_.hard_depth_active(epoch)) {
            rec.hard_depth = true;
            rec.hard_depth_loss = hard_depth_step(rec.lr_scale);
        }
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch), epoch, e.snapshot());
    }
    return rec;
}

std::vector<GaussianKernel> optimize(std::span<const GaussianKernel> kernels, std::vector<SupervisionView> views,
                                     const TrainSchedule& schedule, const RenderSettings& settings,
                                     std::vector<EpochRecord>* trace)
{
    Trainer trainer(kernels, std::move(views), schedule, settings);
    for (int e = 1; e <= schedule.epochs; ++e) {
        const EpochRecord rec = trainer.run_epoch(e);
        if (trace != nullptr) {
            trace->push_back(rec);
        }
    }
    return trainer.kernels();
}

} // namespace physgs::optim

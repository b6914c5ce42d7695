#include "physgs/propagate.hpp"

#include <cmath>
#include <string>

namespace physgs::propagate {

namespace {

void check_dims(const Tokens& q, const Tokens& k, const Tokens& v, const char* what)
{
    if (q.cols() == 0) {
        throw Error(std::string(what) + ": token dimension is zero");
    }
    if (k.cols() != q.cols()) {
        throw Error(std::string(what) + ": query and key dimensions differ");
    }
    if (k.rows() != v.rows()) {
        throw Error(std::string(what) + ": key and value counts differ");
    }
    if (k.rows() == 0) {
        throw Error(std::string(what) + ": no keys");
    }
}

} // namespace

AttentionResult attention_with_weights(const Tokens& q, const Tokens& k, const Tokens& v, Exec exec)
{
    check_dims(q, k, v, "attention");
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    AttentionResult out;
    out.weights.resize(q.rows(), k.rows());
    out.output.resize(q.rows(), v.cols());
    const Eigen::Index n = q.rows();
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd s = (q.row(i) * k.transpose()) * scale;
        s.array() -= s.maxCoeff();
        s = s.array().exp().matrix();
        s /= s.sum();
        out.weights.row(i) = s;
        out.output.row(i) = s * v;
    }
    return out;
}

Tokens attention(const Tokens& q, const Tokens& k, const Tokens& v, Exec exec)
{
    return attention_with_weights(q, k, v, exec).output;
}

Tokens extended_attention(const Tokens& q, std::span<const Tokens> keys, std::span<const Tokens> values,
                          Exec exec)
{
    if (keys.empty() || keys.size() != values.size()) {
        throw Error("extended_attention: need matching, non-empty key and value blocks");
    }
    for (std::size_t b = 0; b < keys.size(); ++b) {
        check_dims(q, keys[b], values[b], "extended_attention");
        if (keys[b].rows() != keys[0].rows() || values[b].cols() != values[0].cols()) {
            throw Error("extended_attention: keyframe block " + std::to_string(b) + " has a different shape");
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    const std::size_t blocks = keys.size();
    Tokens out(q.rows(), values[0].cols());
    const Eigen::Index n = q.rows();
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::RowVectorXd> scores(blocks);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < blocks; ++b) {
            scores[b] = (q.row(i) * keys[b].transpose()) * scale;
            top = std::max(top, scores[b].maxCoeff());
        }
        double total = 0.0;
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(values[0].cols());
        for (std::size_t b = 0; b < blocks; ++b) {
            scores[b] = (scores[b].array() - top).exp().matrix();
            total += scores[b].sum();
            acc += scores[b] * values[b];
        }
        out.row(i) = acc / total;
    }
    return out;
}

std::vector<Tokens> extended_attention_all(std::span<const Tokens> coarse_q, std::span<const Tokens> coarse_k,
                                           std::span<const Tokens> enhanced_v, Exec exec)
{
    if (coarse_q.size() != coarse_k.size() || coarse_q.size() != enhanced_v.size()) {
        throw Error("extended_attention: keyframe counts differ between Q, K and V");
    }
    std::vector<Tokens> out;
    out.reserve(coarse_q.size());
    for (std::size_t k = 0; k < coarse_q.size(); ++k) {
        if (coarse_q[k].rows() != coarse_q[0].rows()) {
            throw Error("extended_attention: keyframe " + std::to_string(k) + " has a different token count");
        }
        out.push_back(extended_attention(coarse_q[k], coarse_k, enhanced_v, exec));
    }
    return out;
}

} // namespace physgs::propagate

#pragma once

// Finite-difference check of the full min-player objective on a tiny model.

#include <limits>
#include <random>

#include "drsc/cycle.hpp"
#include "gradcheck.hpp"
#include "toy.hpp"

namespace drsc::testing {

struct ObjectiveGradcheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst_param;
};

/// Samples `samples` min-player scalars uniformly and compares backward()
/// against finite differences. The random source is reseeded for every
/// evaluation so reparameterization noise, dropout and latent samples are
/// identical across the perturbed runs.
///
/// Many gradients here are around 1e-8 while the loss is O(1), so a single
/// central difference is dominated either by roundoff (small steps) or by
/// ReLU and |x| kinks (large steps), and where the usable window sits varies
/// per scalar. Each scalar is therefore differenced over a ladder of steps and
/// the estimate that agrees best with both of its neighbours is kept.
inline ObjectiveGradcheck objective_gradcheck(std::size_t samples = 100, std::uint64_t seed = 1, Criterion criterion = Criterion::l1,
                                              std::vector<double> steps = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 3e-7}) {
    const ModelSpec spec = tiny_spec(10);
    DrscModel<double> net(spec, seed);
    std::mt19937_64 data_rng(seed + 1);
    const std::size_t batch = 3;
    const Var<double> mel = random_feature<double>({batch, spec.n_mels, spec.mel_frames}, data_rng);
    const std::vector<int> ids{3, 5, 9, 2, 0, 0, 0, 0,  //
                               1, 4, 4, 7, 8, 6, 2, 3,  //
                               9, 0, 0, 0, 0, 0, 0, 0};
    const Lengths lengths{4, 8, 1};
    const std::vector<int> labels{0, 13, 24};
    const LossWeights weights;  // all ones, optional group on

    auto loss = [&] {
        Rng rng(seed + 2);
        const ForwardContext ctx{true, &rng};
        return total_objective(net, net.embed(ids, batch), mel, lengths, labels, weights, criterion, ctx).min_loss;
    };

    const auto params = net.params().group(Role::min_player);
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].var.size(); ++i) all.emplace_back(p, i);
    std::mt19937_64 pick(seed + 3);
    std::shuffle(all.begin(), all.end(), pick);
    all.resize(std::min(samples, all.size()));

    net.params().zero_grad();
    backward(loss());
    ObjectiveGradcheck report;
    for (const auto& [p, i] : all) {
        Var<double> leaf = params[p].var;
        const double analytic = leaf.grad()[i];
        double& v = leaf.mutable_value()[i];
        const double saved = v;
        auto at = [&](double offset) {
            v = saved + offset;
            return loss().item();
        };
        std::vector<double> estimates;
        for (double h : steps)
            estimates.push_back((at(h) - at(-h)) / (2 * h));
        v = saved;
        double numeric = estimates.front();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k + 1 < estimates.size(); ++k) {
            const double gap = std::max(std::abs(estimates[k] - estimates[k - 1]), std::abs(estimates[k] - estimates[k + 1]));
            if (gap < best) {
                best = gap;
                numeric = estimates[k];
            }
        }
        const double err = relative_error(analytic, numeric);
        if (err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_param = params[p].name + "[" + std::to_string(i) + "]";
        }
        ++report.checked;
    }
    return report;
}

}  // namespace drsc::testing

#include "leaf/trainer.hpp"

#include "leaf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace leaf {

Real learning_rate(const TrainConfig& cfg, Index epoch) {
    const Index decays = epoch / cfg.lr_decay_epochs;
    return cfg.lr * static_cast<Real>(std::pow(static_cast<double>(cfg.lr_decay_factor), static_cast<double>(decays)));
}

Tensor flip_horizontal(const Tensor& t) {
    if (t.rank() != 3) throw ShapeError("flip_horizontal expects [C,H,W], got " + shape_str(t.shape()));
    const Index c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out(t.shape());
    for (Index k = 0; k < c; ++k)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) out[(k * h + y) * w + x] = t[(k * h + y) * w + (w - 1 - x)];
    return out;
}

Tensor rotate90(const Tensor& t, int k) {
    if (t.rank() != 3 || t.dim(1) != t.dim(2)) throw ShapeError("rotate90 expects square [C,H,W], got " + shape_str(t.shape()));
    k = ((k % 4) + 4) % 4;
    Tensor cur = t;
    const Index c = t.dim(0), n = t.dim(1);
    for (int turn = 0; turn < k; ++turn) {
        Tensor out(t.shape());
        for (Index ch = 0; ch < c; ++ch)
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < n; ++j) out[(ch * n + i) * n + j] = cur[(ch * n + j) * n + (n - 1 - i)];
        cur = std::move(out);
    }
    return cur;
}

Sample transform_sample(const Sample& s, bool flip, int quarter_turns) {
    auto apply = [&](const Tensor& t) { return rotate90(flip ? flip_horizontal(t) : t, quarter_turns); };
    return Sample{s.id, apply(s.rgb), apply(s.depth), apply(s.gt)};
}

Sample augment_sample(const Sample& s, std::mt19937_64& rng) {
    std::bernoulli_distribution flip(0.5);
    std::uniform_int_distribution<int> turns(0, 3);
    const bool f = flip(rng);
    const int k = turns(rng);
    return transform_sample(s, f, k);
}

Tensor predict(const LeafModel& model, const Tensor& rgb, const Tensor& depth) {
    NoGradGuard guard;
    return model.forward(rgb, depth).final_map().value();
}

double mean_mae(const LeafModel& model, const std::vector<Sample>& samples) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0;
    for (const auto& s : samples) {
        const Tensor p = predict(model, s.rgb, s.depth);
        double err = 0;
        for (Index i = 0; i < p.size(); ++i) err += std::abs(static_cast<double>(p[i]) - static_cast<double>(s.gt[i]));
        total += err / static_cast<double>(p.size());
    }
    return total / static_cast<double>(samples.size());
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_validation(std::vector<Sample> samples, Index val_count) {
    if (val_count < 0 || val_count >= static_cast<Index>(samples.size())) {
        throw ConfigError("val_count " + std::to_string(val_count) + " leaves no training samples out of " +
                          std::to_string(samples.size()));
    }
    std::vector<Sample> val(samples.end() - val_count, samples.end());
    samples.resize(samples.size() - static_cast<std::size_t>(val_count));
    return {std::move(samples), std::move(val)};
}

TrainResult train(LeafModel& model, const TrainConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw DataError("training set is empty");
    const Index n = static_cast<Index>(train_set.size());
    const Index batch = std::min(cfg.batch_size, n);
    const Index epoch_steps = std::max<Index>(1, n / batch);

    // Separate stream from parameter init so data order is independent of model size.
    std::mt19937_64 rng(model.config().seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::size_t cursor = order.size();

    auto& params = model.params().params();
    AdamState state;
    AdamOptions opt{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    TrainResult result;
    double epoch_loss = 0;
    Index epoch_count = 0;
    for (Index it = 0; it < cfg.iterations; ++it) {
        const Index epoch = it / epoch_steps;
        double step_loss = 0;
        model.params().zero_grad();
        for (Index b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                std::iota(order.begin(), order.end(), Index{0});
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const Sample& base = train_set[static_cast<std::size_t>(order[cursor++])];
            const Sample s = cfg.augment ? augment_sample(base, rng) : base;
            Var loss;
            try {
                const Predictions preds = model.forward(s.rgb, s.depth);
                loss = mul_scalar(deep_supervision_loss(preds, s.gt), Real(1) / static_cast<Real>(batch));
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(it) + " (sample " + s.id +
                                   ")");
            }
            const double value = static_cast<double>(loss.value()[0]);
            if (!std::isfinite(value)) {
                throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (sample " + s.id + ")");
            }
            step_loss += value;
            backward(loss);
        }
        opt.lr = learning_rate(cfg, epoch);
        adam_step(params, state, opt);
        for (const auto& p : params) {
            if (!all_finite(p.var.value())) {
                throw NumericError("parameter " + p.name + " became non-finite at iteration " + std::to_string(it));
            }
        }
        result.iteration_loss.push_back(step_loss);
        epoch_loss += step_loss;
        ++epoch_count;

        const bool epoch_end = (it + 1) % epoch_steps == 0 || it + 1 == cfg.iterations;
        if (epoch_end) {
            EpochRecord rec{epoch, epoch_loss / static_cast<double>(epoch_count), mean_mae(model, val_set)};
            result.epochs.push_back(rec);
            if (on_epoch) on_epoch(rec);
            epoch_loss = 0;
            epoch_count = 0;
        }
    }
    model.params().zero_grad();
    return result;
}

std::string format_epoch(const EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%td\t%.6f\t%.6f\n", r.epoch, r.loss, r.val_mae);
    return buf;
}

}  // namespace leaf

#pragma once

#include "leaf/config.hpp"
#include "leaf/synthetic.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace leaf {

struct EpochRecord {
    Index epoch = 0;
    double loss = 0;
    /// NaN when there is no validation set.
    double val_mae = 0;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::vector<double> iteration_loss;
};

/// lr0 * factor^floor(epoch / decay_epochs), epochs counted from 0.
Real learning_rate(const TrainConfig& cfg, Index epoch);

/// Horizontal mirror of a [C,H,W] tensor.
Tensor flip_horizontal(const Tensor& t);
/// Counter-clockwise rotation by k quarter turns of a square [C,H,W] tensor.
Tensor rotate90(const Tensor& t, int k);
/// Same flip and rotation applied to rgb, depth and gt.
Sample transform_sample(const Sample& s, bool flip, int quarter_turns);
/// Draws flip ~ Bernoulli(0.5) and k ~ U{0..3}.
Sample augment_sample(const Sample& s, std::mt19937_64& rng);

/// Final prediction map [1,H,W] without recording a graph.
Tensor predict(const LeafModel& model, const Tensor& rgb, const Tensor& depth);
double mean_mae(const LeafModel& model, const std::vector<Sample>& samples);

/// Splits the last `val_count` samples off as validation.
std::pair<std::vector<Sample>, std::vector<Sample>> split_validation(std::vector<Sample> samples, Index val_count);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on the deep-supervised loss. An epoch is max(1, n / batch) steps;
/// step losses are averaged over the batch. Non-finite loss raises NumericError.
TrainResult train(LeafModel& model, const TrainConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const EpochCallback& on_epoch = {});

/// `epoch\tloss\tval_mae` with 6 decimals.
std::string format_epoch(const EpochRecord& r);

}  // namespace leaf

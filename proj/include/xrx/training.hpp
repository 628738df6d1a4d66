#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "xrx/autodiff.hpp"
#include "xrx/errors.hpp"
#include "xrx/network.hpp"
#include "xrx/tensor.hpp"
#include "xrx/util.hpp"

namespace xrx {

// ---------------------------------------------------------------------------
// cyclic cosine annealing

struct ScheduleConfig {
    double alpha0 = 1.0;  // maximum learning rate
    int total_epochs = 200;
    int cycles = 20;

    int period() const { return (total_epochs + cycles - 1) / cycles; }  // ceil(T/C)

    void validate() const {
        if (alpha0 <= 0.0) throw InvalidConfig("schedule: alpha0 must be positive");
        if (cycles < 1 || cycles > total_epochs)
            throw InvalidConfig("schedule: need 1 <= C <= T");
    }
};

// alpha(t) = (alpha0/2) * (cos(pi * mod(t-1, ceil(T/C)) / ceil(T/C)) + 1), t 1-based
inline double cosine_annealing_lr(int t, const ScheduleConfig& cfg) {
    cfg.validate();
    if (t < 1 || t > cfg.total_epochs)
        throw OutOfRange("cosine_annealing_lr: epoch " + std::to_string(t) + " outside [1, T]");
    const int p = cfg.period();
    const double phase = static_cast<double>((t - 1) % p) / static_cast<double>(p);
    return cfg.alpha0 / 2.0 * (std::cos(3.14159265358979323846 * phase) + 1.0);
}

// ---------------------------------------------------------------------------
// class weighting and SGD

// w_c = N / (K * n_c); balanced counts give all ones
inline std::vector<float> class_weights(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw EmptyClass("class_weights: no classes");
    double total = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) throw EmptyClass("class_weights: a class has zero samples");
        total += static_cast<double>(c);
    }
    std::vector<float> w(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        w[i] = static_cast<float>(total /
                                  (static_cast<double>(counts.size()) * static_cast<double>(counts[i])));
    return w;
}

// p <- p - lr * (g + l2 * p), elementwise over one parameter vector
inline void sgd_step(std::vector<float>& params, const std::vector<float>& grads, double lr,
                     double l2) {
    if (params.size() != grads.size()) throw ShapeMismatch("sgd_step: shape mismatch");
    if (lr < 0.0) throw InvalidConfig("sgd_step: lr must be >= 0");
    const float flr = static_cast<float>(lr), fl2 = static_cast<float>(l2);
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= flr * (grads[i] + fl2 * params[i]);
}

inline void sgd_step(Network& net, const GradientSet& grads, double lr, double l2) {
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (net.params(i).empty()) continue;
        LayerParams& p = net.mutable_params(i);
        sgd_step(p.weights, grads.param_grads[i].weights, lr, l2);
        sgd_step(p.bias, grads.param_grads[i].bias, lr, l2);
    }
}

// ---------------------------------------------------------------------------
// snapshot training

enum class SnapshotCapture {
    BestValInFinalQuarter,  // best validation loss among the cycle's last quarter of epochs
    LastEpoch
};

struct TrainConfig {
    ScheduleConfig schedule;
    std::size_t batch_size = 32;
    double l2 = 0.0;
    float dropout_rate = -1.0f;  // < 0 keeps the rates declared by the network's layers
    std::vector<float> class_weight;  // empty = derive balanced weights from the data
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    SnapshotCapture capture = SnapshotCapture::BestValInFinalQuarter;

    void validate() const {
        schedule.validate();
        if (batch_size < 1) throw InvalidConfig("train: batch size must be >= 1");
        if (l2 < 0.0) throw InvalidConfig("train: l2 must be >= 0");
        for (float w : class_weight)
            if (w <= 0.0f) throw InvalidConfig("train: class weights must be positive");
        if (val_fraction <= 0.0 || val_fraction >= 0.5)
            throw InvalidConfig("train: validation fraction must be in (0, 0.5)");
    }
};

struct ValMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Parameter state captured at the bottom of one annealing cycle.
struct Snapshot {
    std::vector<LayerParams> params;
    int cycle = 0;   // 1-based
    int epoch = 0;   // 1-based epoch the parameters were taken from
    ValMetrics val;
    ScheduleConfig schedule;
};

struct LabeledData {
    Tensor4 inputs;                  // (N, c, h, w)
    std::vector<std::size_t> labels;  // length N, values < K
};

struct EpochLogRow {
    int epoch = 0;
    int cycle = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

namespace detail {

// stratified index split: coarse `frac` of each class goes to the second set
inline void stratified_split(const std::vector<std::size_t>& labels, std::size_t num_classes,
                             double frac, std::uint64_t seed,
                             std::vector<std::size_t>& first, std::vector<std::size_t>& second) {
    std::vector<std::vector<std::size_t>> per_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);
    Rng rng(derive_seed(seed, 0x5917));
    first.clear();
    second.clear();
    for (auto& idx : per_class) {
        rng.shuffle(idx);
        std::size_t take = idx.size() >= 2
                               ? std::max<std::size_t>(
                                     1, static_cast<std::size_t>(
                                            std::floor(frac * static_cast<double>(idx.size()) + 0.5)))
                               : 0;
        if (take >= idx.size()) take = idx.size() - 1;
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < take ? second : first).push_back(idx[i]);
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
}

inline ValMetrics evaluate_split(const Network& net, const Tensor4& inputs,
                                 const std::vector<std::size_t>& labels,
                                 const std::vector<float>& weights, std::size_t batch_size) {
    ValMetrics m;
    if (labels.empty()) return m;
    const std::size_t K = net.classes();
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < labels.size(); start += batch_size) {
        const std::size_t end = std::min(labels.size(), start + batch_size);
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        const ForwardCache cache = forward(net, inputs.gather(idx), Mode::Eval);
        const Tensor4& post = cache.posterior();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const float* row = post.v.data() + i * K;
            std::vector<float> p(row, row + K);
            loss += cross_entropy_weighted(p, labels[idx[i]], weights);
            if (argmax_row(row, K) == labels[idx[i]]) ++correct;
        }
    }
    m.loss = loss / static_cast<double>(labels.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    return m;
}

}  // namespace detail

// Minibatch SGD over the cosine-annealing schedule; one snapshot per cycle.
// Per epoch: seeded shuffle, weighted cross-entropy, lr = alpha(t). Snapshot
// capture follows cfg.capture. Deterministic for a fixed seed.
//
// Returns exactly cfg.schedule.cycles snapshots, ordered by cycle. An
// optional stream receives the per-epoch CSV log
// (epoch,cycle,lr,train_loss,val_loss,val_acc), and an optional row vector
// collects the same data for programmatic use.
inline std::vector<Snapshot> train_with_snapshots(Network& net, const LabeledData& data,
                                                  const TrainConfig& cfg,
                                                  std::ostream* csv_log = nullptr,
                                                  std::vector<EpochLogRow>* log_rows = nullptr) {
    cfg.validate();
    if (data.labels.empty()) throw InvalidConfig("train: empty dataset");
    if (data.inputs.n != data.labels.size())
        throw ShapeMismatch("train: inputs and labels disagree on sample count");
    const std::size_t K = net.classes();
    for (std::size_t l : data.labels)
        if (l >= K) throw InvalidConfig("train: label id >= class count");
    if (!cfg.class_weight.empty() && cfg.class_weight.size() != K)
        throw InvalidConfig("train: class weight count != K");

    // apply a config-level dropout override to every dropout layer
    Network* worknet = &net;
    Network overridden;
    if (cfg.dropout_rate >= 0.0f) {
        std::vector<LayerSpec> specs = net.layers();
        for (auto& l : specs)
            if (l.kind == LayerKind::Dropout) l.rate = cfg.dropout_rate;
        overridden = Network(net.input_shape(), specs);
        overridden.set_all_params(net.all_params());
        worknet = &overridden;
    }

    std::vector<float> weights = cfg.class_weight;
    if (weights.empty()) {
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t l : data.labels) ++counts[l];
        for (std::size_t c : counts)
            if (c == 0) throw EmptyClass("train: class with zero samples and no explicit weights");
        weights = class_weights(counts);
    }

    std::vector<std::size_t> train_idx, val_idx;
    detail::stratified_split(data.labels, K, cfg.val_fraction, cfg.seed, train_idx, val_idx);
    if (train_idx.empty()) throw InvalidConfig("train: no training samples after split");

    const int T = cfg.schedule.total_epochs;
    const int C = cfg.schedule.cycles;
    const int P = cfg.schedule.period();
    const int quarter = std::max(1, (P + 3) / 4);

    Tensor4 val_inputs;
    std::vector<std::size_t> val_labels;
    if (!val_idx.empty()) {
        val_inputs = data.inputs.gather(val_idx);
        val_labels.reserve(val_idx.size());
        for (std::size_t i : val_idx) val_labels.push_back(data.labels[i]);
    }

    if (csv_log) *csv_log << "epoch,cycle,lr,train_loss,val_loss,val_acc\n";

    std::vector<Snapshot> snapshots;
    snapshots.reserve(C);
    bool have_candidate = false;
    Snapshot candidate;

    std::vector<std::size_t> order = train_idx;
    for (int t = 1; t <= T; ++t) {
        const int cycle = (t - 1) / P + 1;
        const int pos_in_cycle = (t - 1) % P + 1;  // 1..P
        const double lr = cosine_annealing_lr(t, cfg.schedule);

        Rng shuffle_rng(derive_seed(cfg.seed, 0xE90C + static_cast<std::uint64_t>(t)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
            const Tensor4 batch = data.inputs.gather(idx);
            const std::uint64_t fseed =
                derive_seed(cfg.seed, 0xF00D ^ (static_cast<std::uint64_t>(t) << 20) ^ batch_no);
            const ForwardCache cache = forward(*worknet, batch, Mode::Train, fseed);
            const Tensor4& post = cache.posterior();

            std::vector<float> seed_grad(idx.size() * K);
            double batch_loss = 0.0;
            const double inv_n = 1.0 / static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const std::size_t label = data.labels[idx[i]];
                const float* row = post.v.data() + i * K;
                std::vector<float> p(row, row + K);
                batch_loss += cross_entropy_weighted(p, label, weights);
                std::vector<float> gr = cross_entropy_weighted_grad(p, label, weights);
                for (std::size_t k = 0; k < K; ++k)
                    seed_grad[i * K + k] = static_cast<float>(gr[k] * inv_n);
            }
            batch_loss *= inv_n;
            if (!std::isfinite(batch_loss))
                throw NonFiniteLoss("train: non-finite loss in cycle " + std::to_string(cycle) +
                                    " (epoch " + std::to_string(t) + ")");
            const GradientSet grads = backward(*worknet, cache, seed_grad);
            sgd_step(*worknet, grads, lr, cfg.l2);
            epoch_loss += batch_loss * static_cast<double>(idx.size());
        }
        epoch_loss /= static_cast<double>(order.size());

        const ValMetrics vm =
            val_labels.empty()
                ? ValMetrics{epoch_loss, 0.0}
                : detail::evaluate_split(*worknet, val_inputs, val_labels, weights, cfg.batch_size);

        if (csv_log)
            *csv_log << t << ',' << cycle << ',' << lr << ',' << epoch_loss << ',' << vm.loss
                     << ',' << vm.accuracy << '\n';
        if (log_rows) log_rows->push_back({t, cycle, lr, epoch_loss, vm.loss, vm.accuracy});

        const bool in_window = cfg.capture == SnapshotCapture::LastEpoch
                                   ? pos_in_cycle == P || t == T
                                   : pos_in_cycle > P - quarter || t == T;
        if (in_window) {
            if (!have_candidate || vm.loss < candidate.val.loss) {
                candidate.params = worknet->all_params();
                candidate.cycle = cycle;
                candidate.epoch = t;
                candidate.val = vm;
                candidate.schedule = cfg.schedule;
                have_candidate = true;
            }
        }
        if (pos_in_cycle == P || t == T) {  // cycle bottom: seal the snapshot
            if (!have_candidate) {
                candidate.params = worknet->all_params();
                candidate.cycle = cycle;
                candidate.epoch = t;
                candidate.val = vm;
                candidate.schedule = cfg.schedule;
            }
            snapshots.push_back(candidate);
            have_candidate = false;
            if (static_cast<int>(snapshots.size()) == C) break;
        }
    }
    // T not divisible by C can leave trailing cycles without epochs; repeat
    // the final state so the contract of C snapshots holds
    while (static_cast<int>(snapshots.size()) < C) {
        Snapshot s = snapshots.back();
        s.cycle = static_cast<int>(snapshots.size()) + 1;
        snapshots.push_back(s);
    }
    if (cfg.dropout_rate >= 0.0f) net.set_all_params(worknet->all_params());
    return snapshots;
}

}  // namespace xrx

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrx/autodiff.hpp"
#include "xrx/config.hpp"
#include "xrx/ensemble.hpp"
#include "xrx/errors.hpp"
#include "xrx/explain.hpp"
#include "xrx/manifest.hpp"
#include "xrx/metrics.hpp"
#include "xrx/png_io.hpp"
#include "xrx/preprocess.hpp"
#include "xrx/snapshot_io.hpp"
#include "xrx/spectral.hpp"
#include "xrx/training.hpp"

namespace xrx {
namespace cli {

inline const char* kUsage =
    "usage: xray-xplain <subcommand> --config <path> [--out <dir>] [--seed <u64>]\n"
    "subcommands:\n"
    "  preprocess   run the enhancement chain, write processed PNGs and dataset stats\n"
    "  train        train with cyclic cosine annealing, write per-cycle snapshots\n"
    "  select       rank snapshots by weight-spectrum statistics\n"
    "  ensemble     combine ranked snapshots (SCPA or PM) and score the test split\n"
    "  explain      write saliency overlays + sidecar JSON for test images\n"
    "  evaluate     metrics report on the test split, or k-fold cross-validation\n";

struct CliArgs {
    std::string subcommand;
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
};

inline CliArgs parse_args(const std::vector<std::string>& argv) {
    if (argv.empty()) throw InvalidConfig("missing subcommand");
    CliArgs args;
    args.subcommand = argv[0];
    const std::vector<std::string> known = {"preprocess", "train",   "select",
                                            "ensemble",   "explain", "evaluate"};
    if (std::find(known.begin(), known.end(), args.subcommand) == known.end())
        throw InvalidConfig("unknown subcommand: " + args.subcommand);
    for (std::size_t i = 1; i < argv.size(); ++i) {
        const std::string& a = argv[i];
        auto next = [&]() -> const std::string& {
            if (i + 1 >= argv.size()) throw InvalidConfig("missing value for " + a);
            return argv[++i];
        };
        if (a == "--config")
            args.config_path = next();
        else if (a == "--out")
            args.out_dir = next();
        else if (a == "--seed") {
            try {
                args.seed = std::stoull(next());
            } catch (const std::exception&) {
                throw InvalidConfig("--seed expects an unsigned integer");
            }
        } else {
            throw InvalidConfig("unknown option: " + a);
        }
    }
    if (args.config_path.empty()) throw InvalidConfig("--config is required");
    return args;
}

// ---------------------------------------------------------------------------
// dataset assembly

struct Dataset {
    Tensor4 inputs;  // (N, C, side, side), standardized
    std::vector<std::size_t> labels;
    std::vector<std::string> names;        // output-friendly stems, one per row
    std::vector<GrayImage> display;        // pre-standardize images at network resolution
    std::vector<std::string> class_names;
    std::vector<std::size_t> train_idx, test_idx;  // indices into the arrays above
    double mean = 0.0, std = 1.0;
};

namespace detail {

inline std::string path_stem(const std::string& p) {
    return std::filesystem::path(p).stem().string();
}

// the configured stages before `resize` operate on the grey image
inline GrayImage run_gray_stages(GrayImage img, const PreprocessConfig& cfg) {
    for (Stage st : cfg.stages) {
        switch (st) {
            case Stage::Grayscale:
                img.require(Regime::Levels, "pipeline: grayscale stage");
                break;
            case Stage::RemoveArtifacts:
                img = remove_text_artifacts(img, cfg.artifact_quantile,
                                            cfg.artifact_component_frac);
                break;
            case Stage::Equalize:
                img = equalize(img);
                break;
            case Stage::Normalize:
                img = normalize(img);
                break;
            case Stage::PeronaMalik:
                img = perona_malik(img, cfg.diffusion);
                break;
            case Stage::Unsharp:
                img = unsharp(img, cfg.unsharp_kernel);
                break;
            case Stage::Resize:
            case Stage::Standardize:
                return img;
        }
    }
    return img;
}

inline bool pipeline_standardizes(const PreprocessConfig& cfg) {
    for (Stage st : cfg.stages)
        if (st == Stage::Standardize) return true;
    return false;
}

inline Tensor4 to_network_tensor(const GrayImage& enhanced, const PreprocessConfig& cfg,
                                 int channels) {
    Tensor4 t = resize_bilinear(enhanced, cfg.output_side);
    if (channels == 1) {
        Tensor4 one(1, 1, t.h, t.w);
        std::copy(t.plane(0, 0), t.plane(0, 0) + t.h * t.w, one.plane(0, 0));
        return one;
    }
    return t;
}

inline GrayImage tensor_to_gray(const Tensor4& t) {
    GrayImage g(t.h, t.w, Regime::Unit);
    std::copy(t.plane(0, 0), t.plane(0, 0) + t.h * t.w, g.pix.begin());
    return g;
}

inline Dataset build_dataset(const RunConfig& rc, const std::filesystem::path& base_dir,
                             bool augment_train) {
    if (rc.manifest_path.empty()) throw InvalidConfig("config: [data] manifest is required");
    std::filesystem::path mpath(rc.manifest_path);
    if (mpath.is_relative()) mpath = base_dir / mpath;
    const Manifest manifest = load_manifest(mpath.string());

    Dataset ds;
    ds.class_names = manifest.labels;

    // honour an explicit split column; otherwise stratified by seed
    bool explicit_split = false;
    for (const auto& r : manifest.rows)
        if (r.split != SplitTag::Unassigned) explicit_split = true;

    std::vector<std::size_t> row_labels;
    row_labels.reserve(manifest.rows.size());
    for (const auto& r : manifest.rows) row_labels.push_back(r.label_id);

    std::vector<std::size_t> train_rows, test_rows;
    if (explicit_split) {
        for (std::size_t i = 0; i < manifest.rows.size(); ++i)
            (manifest.rows[i].split == SplitTag::Test ? test_rows : train_rows).push_back(i);
    } else {
        std::tie(train_rows, test_rows) =
            train_test_split(row_labels, rc.test_fraction, rc.split_seed);
    }

    const std::filesystem::path image_root = mpath.parent_path();
    std::vector<Tensor4> tensors;
    auto add_row = [&](std::size_t row, const GrayImage& enhanced, const std::string& suffix) {
        Tensor4 t = to_network_tensor(enhanced, rc.preprocess, rc.input_channels);
        ds.display.push_back(tensor_to_gray(t));
        tensors.push_back(std::move(t));
        ds.labels.push_back(manifest.rows[row].label_id);
        ds.names.push_back(std::to_string(row) + "_" + path_stem(manifest.rows[row].path) +
                           suffix);
    };

    std::vector<GrayImage> enhanced(manifest.rows.size());
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
        const std::filesystem::path ip = image_root / manifest.rows[i].path;
        enhanced[i] = run_gray_stages(read_png_gray(ip.string()), rc.preprocess);
    }

    for (std::size_t i : train_rows) {
        ds.train_idx.push_back(ds.labels.size());
        add_row(i, enhanced[i], "");
    }
    if (augment_train && rc.preprocess.augment_copies > 0) {
        for (std::size_t i : train_rows) {
            for (int c = 0; c < rc.preprocess.augment_copies; ++c) {
                const GrayImage rot = augment_rotate(
                    enhanced[i], derive_seed(rc.split_seed, i * 131 + c),
                    rc.preprocess.max_rotate_deg);
                ds.train_idx.push_back(ds.labels.size());
                add_row(i, rot, "_aug" + std::to_string(c));
            }
        }
    }
    for (std::size_t i : test_rows) {
        ds.test_idx.push_back(ds.labels.size());
        add_row(i, enhanced[i], "");
    }

    // dataset statistics from the original (non-augmented) images
    if (pipeline_standardizes(rc.preprocess)) {
        double mean = rc.preprocess.mean, sd = rc.preprocess.std;
        if (rc.standardize_auto) {
            double s = 0.0, s2 = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < tensors.size(); ++i) {
                if (ds.names[i].find("_aug") != std::string::npos) continue;
                for (float v : tensors[i].v) {
                    s += v;
                    s2 += static_cast<double>(v) * v;
                    ++n;
                }
            }
            mean = s / static_cast<double>(n);
            const double var = s2 / static_cast<double>(n) - mean * mean;
            sd = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
        ds.mean = mean;
        ds.std = sd;
        for (auto& t : tensors) t = standardize(t, mean, sd);
    }

    const std::size_t N = tensors.size();
    ds.inputs = Tensor4(N, tensors[0].c, tensors[0].h, tensors[0].w);
    const std::size_t stride = tensors[0].c * tensors[0].h * tensors[0].w;
    for (std::size_t i = 0; i < N; ++i)
        std::copy(tensors[i].v.begin(), tensors[i].v.end(), ds.inputs.v.begin() + i * stride);
    return ds;
}

inline Network network_from_config(const RunConfig& rc) {
    if (rc.layers.empty()) throw InvalidConfig("config: [network] layers is required");
    const Shape3 in{static_cast<std::size_t>(rc.input_channels), rc.preprocess.output_side,
                    rc.preprocess.output_side};
    return Network(in, rc.layers);
}

inline std::vector<std::string> list_snapshot_files(const std::filesystem::path& dir) {
    std::vector<std::string> files;
    if (std::filesystem::exists(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".dcxs")
                files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw InvalidConfig("no .dcxs snapshot files in " + dir.string() + " (run `train` first)");
    return files;
}

struct RankedSnapshots {
    std::vector<std::string> files;
    std::vector<SnapshotFile> snapshots;
    std::vector<SpectralStats> stats;
    std::vector<std::size_t> ranking;  // indices, best first
};

inline RankedSnapshots load_and_rank(const RunConfig& rc, const std::filesystem::path& out_dir,
                                     std::size_t top_k) {
    RankedSnapshots rs;
    rs.files = list_snapshot_files(out_dir);
    for (const auto& f : rs.files) {
        rs.snapshots.push_back(load_snapshot(f));
        Network net(rs.snapshots.back().input, rs.snapshots.back().layers);
        rs.stats.push_back(
            analyze_spectra(net.layers(), rs.snapshots.back().snapshot.params, rc.spectral_min_dim));
    }
    rs.ranking = rank_snapshots(rs.stats, std::min(top_k, rs.stats.size()), rc.prefer_high_alpha);
    return rs;
}

// per-sample posterior of each model; rows follow `nets` order
inline PosteriorMatrix member_posteriors(const std::vector<Network>& nets, const Tensor4& sample) {
    PosteriorMatrix p(nets.size(), nets[0].classes());
    for (std::size_t m = 0; m < nets.size(); ++m) {
        const ForwardCache cache = forward(nets[m], sample, Mode::Eval);
        for (std::size_t k = 0; k < p.classes; ++k) p.at(m, k) = cache.posterior().at(0, k, 0, 0);
    }
    return p;
}

inline Prediction combine(const PosteriorMatrix& p, EnsembleMethod method) {
    switch (method) {
        case EnsembleMethod::ScpaSumSoftmax: return scpa(p, ScpaMode::SumSoftmax);
        case EnsembleMethod::ScpaMean: return scpa(p, ScpaMode::ArithmeticMean);
        case EnsembleMethod::Pm: return pm(p);
    }
    throw InvalidConfig("bad ensemble method");
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    write_text(p, j.dump(2) + "\n");
}

// evaluate a set of models on the listed samples, combining per the method
inline std::vector<Prediction> predict_all(const std::vector<Network>& nets, const Dataset& ds,
                                           const std::vector<std::size_t>& idx,
                                           EnsembleMethod method) {
    std::vector<Prediction> out;
    out.reserve(idx.size());
    for (std::size_t i : idx)
        out.push_back(combine(member_posteriors(nets, ds.inputs.item(i)), method));
    return out;
}

inline void write_roc_csvs(const std::filesystem::path& out_dir, const Dataset& ds,
                           const std::vector<std::size_t>& idx,
                           const std::vector<Prediction>& preds) {
    for (std::size_t k = 0; k < ds.class_names.size(); ++k) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            scores.push_back(preds[i].distribution[k]);
            labels.push_back(ds.labels[idx[i]] == k ? 1 : 0);
        }
        bool pos = false, neg = false;
        for (int l : labels) (l ? pos : neg) = true;
        if (!pos || !neg) continue;
        const RocCurve roc = roc_auc_ovr(scores, labels);
        write_text(out_dir / ("roc_" + ds.class_names[k] + ".csv"), roc_csv(roc));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// subcommands

inline int cmd_preprocess(const RunConfig& rc, const std::filesystem::path& base_dir,
                          const std::filesystem::path& out_dir) {
    const Dataset ds = detail::build_dataset(rc, base_dir, false);
    const std::filesystem::path img_dir = out_dir / "preprocessed";
    std::filesystem::create_directories(img_dir);
    for (std::size_t i = 0; i < ds.display.size(); ++i)
        write_png_gray((img_dir / (ds.names[i] + ".png")).string(), ds.display[i]);
    nlohmann::json j = {{"mean", ds.mean},
                        {"std", ds.std},
                        {"images", ds.display.size()},
                        {"side", rc.preprocess.output_side},
                        {"classes", ds.class_names}};
    detail::write_json(out_dir / "preprocess_stats.json", j);
    std::cout << "[preprocess] wrote " << ds.display.size() << " images to " << img_dir.string()
              << " (mean " << ds.mean << ", std " << ds.std << ")\n";
    return 0;
}

inline int cmd_train(const RunConfig& rc, const std::filesystem::path& base_dir,
                     const std::filesystem::path& out_dir) {
    const Dataset ds = detail::build_dataset(rc, base_dir, true);
    Network net = detail::network_from_config(rc);
    if (net.classes() != ds.class_names.size())
        throw InvalidConfig("network emits " + std::to_string(net.classes()) +
                            " classes but the manifest has " +
                            std::to_string(ds.class_names.size()));
    net.init_params(rc.train.seed);

    LabeledData data;
    data.inputs = ds.inputs.gather(ds.train_idx);
    for (std::size_t i : ds.train_idx) data.labels.push_back(ds.labels[i]);

    std::filesystem::create_directories(out_dir);
    std::ofstream log((out_dir / "train_log.csv").string());
    if (!log) throw IoError("cannot write train log");
    const std::vector<Snapshot> snaps = train_with_snapshots(net, data, rc.train, &log);

    for (const auto& s : snaps) {
        SnapshotFile sf{net.input_shape(), net.layers(), s};
        std::ostringstream name;
        name << "snapshot_cycle_" << (s.cycle < 10 ? "0" : "") << s.cycle << ".dcxs";
        save_snapshot((out_dir / name.str()).string(), sf);
    }
    nlohmann::json meta = {{"classes", ds.class_names},
                           {"mean", ds.mean},
                           {"std", ds.std},
                           {"train_samples", data.labels.size()},
                           {"test_samples", ds.test_idx.size()},
                           {"snapshots", snaps.size()}};
    detail::write_json(out_dir / "run_meta.json", meta);
    std::cout << "[train] " << snaps.size() << " snapshots written to " << out_dir.string()
              << "\n";
    return 0;
}

inline int cmd_select(const RunConfig& rc, const std::filesystem::path& out_dir) {
    const detail::RankedSnapshots rs = detail::load_and_rank(rc, out_dir, rc.select_top_k);
    nlohmann::json j;
    j["snapshots"] = nlohmann::json::array();
    for (std::size_t i = 0; i < rs.files.size(); ++i) {
        nlohmann::json e = spectral_report_json(rs.stats[i]);
        e["file"] = std::filesystem::path(rs.files[i]).filename().string();
        j["snapshots"].push_back(e);
    }
    j["ranking"] = nlohmann::json::array();
    for (std::size_t r : rs.ranking)
        j["ranking"].push_back(std::filesystem::path(rs.files[r]).filename().string());
    detail::write_json(out_dir / "spectral.json", j);
    std::cout << "[select] ranking (best first):\n";
    for (std::size_t r : rs.ranking)
        std::cout << "  " << std::filesystem::path(rs.files[r]).filename().string()
                  << "  log_norm=" << rs.stats[r].mean_log_frob
                  << "  weighted_alpha=" << rs.stats[r].mean_weighted_alpha << "\n";
    return 0;
}

inline int cmd_ensemble(const RunConfig& rc, const std::filesystem::path& base_dir,
                        const std::filesystem::path& out_dir) {
    const Dataset ds = detail::build_dataset(rc, base_dir, false);
    if (ds.test_idx.empty()) throw InvalidConfig("ensemble: test split is empty");
    const detail::RankedSnapshots rs = detail::load_and_rank(rc, out_dir, rc.ensemble_top_k);
    std::vector<Network> nets;
    for (std::size_t r : rs.ranking) nets.push_back(rs.snapshots[r].build_network());

    const std::vector<Prediction> preds =
        detail::predict_all(nets, ds, ds.test_idx, rc.ensemble_method);
    std::vector<std::size_t> pred_ids, true_ids;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        pred_ids.push_back(preds[i].predicted);
        true_ids.push_back(ds.labels[ds.test_idx[i]]);
    }
    const MetricsReport report =
        metrics_report(confusion(pred_ids, true_ids, ds.class_names.size()), ds.class_names);
    detail::write_json(out_dir / "ensemble_metrics.json", metrics_json(report));
    detail::write_text(out_dir / "ensemble_metrics.txt", metrics_table(report));
    detail::write_roc_csvs(out_dir, ds, ds.test_idx, preds);
    std::cout << "[ensemble] " << nets.size() << " members, test accuracy " << report.accuracy
              << "\n" << metrics_table(report);
    return 0;
}

inline int cmd_explain(const RunConfig& rc, const std::filesystem::path& base_dir,
                       const std::filesystem::path& out_dir) {
    const Dataset ds = detail::build_dataset(rc, base_dir, false);
    const detail::RankedSnapshots rs = detail::load_and_rank(rc, out_dir, 1);
    const Network net = rs.snapshots[rs.ranking[0]].build_network();  // single best model

    const std::filesystem::path exp_dir = out_dir / "explain";
    std::filesystem::create_directories(exp_dir);
    const std::vector<std::size_t>& pool = ds.test_idx.empty() ? ds.train_idx : ds.test_idx;
    const std::size_t count = std::min(rc.explain_max_images, pool.size());

    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t idx = pool[i];
        const Tensor4 sample = ds.inputs.item(idx);
        const ForwardCache cache = forward(net, sample, Mode::Eval);
        Prediction pred;
        pred.distribution.assign(cache.posterior().v.begin(), cache.posterior().v.end());
        pred.predicted = argmax_row(pred.distribution.data(), pred.distribution.size());
        pred.member_posteriors = PosteriorMatrix(1, pred.distribution.size());
        pred.member_posteriors.v = pred.distribution;

        const std::size_t layer =
            rc.explain_layer >= 0 ? static_cast<std::size_t>(rc.explain_layer)
                                  : last_conv_layer(net);
        SaliencyMap sal;
        if (rc.explain_method == "cam") {
            sal = cam(net, sample, pred.predicted);
        } else if (rc.explain_method == "grad-cam") {
            sal = grad_cam(net, sample, pred.predicted, layer);
        } else if (rc.explain_method == "grad-cam++") {
            sal = grad_cam_pp(net, sample, pred.predicted, layer);
        } else {  // lrp: positive relevance, max-normalized for rendering
            const RelevanceMap r = lrp(net, sample, pred.predicted, {rc.lrp_lo, rc.lrp_hi});
            sal.height = r.height;
            sal.width = r.width;
            sal.method = "lrp";
            sal.layer = 0;
            sal.class_id = pred.predicted;
            sal.v.resize(r.v.size());
            for (std::size_t p = 0; p < r.v.size(); ++p) sal.v[p] = std::max(0.0f, r.v[p]);
            float mx = 0.0f;
            for (float v : sal.v) mx = std::max(mx, v);
            if (mx > 0.0f)
                for (float& v : sal.v) v /= mx;
        }
        const SaliencyMap up = upsample_normalize(sal, ds.display[idx].height,
                                                  ds.display[idx].width);
        const RgbImage overlay = render_overlay(ds.display[idx], up, rc.overlay_beta);
        const std::string stem = ds.names[idx] + "_" + rc.explain_method;
        write_png_rgb((exp_dir / (stem + ".png")).string(), overlay);

        const auto [py, px] = up.peak();
        nlohmann::json sidecar = {
            {"method", rc.explain_method},
            {"class", ds.class_names[pred.predicted]},
            {"probability", pred.distribution[pred.predicted]},
            {"peak", {py, px}},
            {"layer", layer},
            {"report", explain_report(pred, rc.explain_method, up, ds.class_names)}};
        detail::write_json(exp_dir / (stem + ".json"), sidecar);
    }
    std::cout << "[explain] wrote " << count << " overlays to " << exp_dir.string() << "\n";
    return 0;
}

inline int cmd_evaluate(const RunConfig& rc, const std::filesystem::path& base_dir,
                        const std::filesystem::path& out_dir) {
    const Dataset ds = detail::build_dataset(rc, base_dir, false);

    if (rc.eval_mode == EvalMode::Split) {
        if (ds.test_idx.empty()) throw InvalidConfig("evaluate: test split is empty");
        const detail::RankedSnapshots rs = detail::load_and_rank(rc, out_dir, rc.ensemble_top_k);
        std::vector<Network> nets;
        for (std::size_t r : rs.ranking) nets.push_back(rs.snapshots[r].build_network());
        const std::vector<Prediction> preds =
            detail::predict_all(nets, ds, ds.test_idx, rc.ensemble_method);
        std::vector<std::size_t> pred_ids, true_ids;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            pred_ids.push_back(preds[i].predicted);
            true_ids.push_back(ds.labels[ds.test_idx[i]]);
        }
        const MetricsReport report =
            metrics_report(confusion(pred_ids, true_ids, ds.class_names.size()), ds.class_names);
        detail::write_json(out_dir / "metrics.json", metrics_json(report));
        detail::write_text(out_dir / "metrics.txt", metrics_table(report));
        detail::write_roc_csvs(out_dir, ds, ds.test_idx, preds);
        std::cout << "[evaluate] test accuracy " << report.accuracy << "\n"
                  << metrics_table(report);
        return 0;
    }

    // k-fold cross-validation: a fresh model (and snapshot ensemble) per fold
    const auto folds = kfold_split(ds.labels, rc.cv_folds, rc.split_seed);
    ConfusionMatrix pooled(ds.class_names.size());
    nlohmann::json fold_stats = nlohmann::json::array();
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());

        Network net = detail::network_from_config(rc);
        net.init_params(derive_seed(rc.train.seed, f));
        LabeledData data;
        data.inputs = ds.inputs.gather(train_idx);
        for (std::size_t i : train_idx) data.labels.push_back(ds.labels[i]);
        TrainConfig tc = rc.train;
        tc.seed = derive_seed(rc.train.seed, 0xCF0 + f);
        const std::vector<Snapshot> snaps = train_with_snapshots(net, data, tc);

        std::vector<SpectralStats> stats;
        for (const auto& s : snaps)
            stats.push_back(analyze_spectra(net.layers(), s.params, rc.spectral_min_dim));
        const auto ranking = rank_snapshots(stats, std::min(rc.ensemble_top_k, stats.size()),
                                            rc.prefer_high_alpha);
        std::vector<Network> nets;
        for (std::size_t r : ranking) {
            Network n = detail::network_from_config(rc);
            n.set_all_params(snaps[r].params);
            nets.push_back(std::move(n));
        }
        const std::vector<Prediction> preds =
            detail::predict_all(nets, ds, folds[f], rc.ensemble_method);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            ++pooled.at(ds.labels[folds[f][i]], preds[i].predicted);
            if (preds[i].predicted == ds.labels[folds[f][i]]) ++correct;
        }
        nlohmann::json fold_entry;
        fold_entry["fold"] = f;
        fold_entry["accuracy"] =
            static_cast<double>(correct) / static_cast<double>(folds[f].size());
        fold_stats.push_back(fold_entry);
    }
    const MetricsReport report = metrics_report(pooled, ds.class_names);
    nlohmann::json j = metrics_json(report);
    j["folds"] = fold_stats;
    detail::write_json(out_dir / "metrics_cv.json", j);
    detail::write_text(out_dir / "metrics_cv.txt", metrics_table(report));
    std::cout << "[evaluate] " << folds.size() << "-fold pooled accuracy " << report.accuracy
              << "\n" << metrics_table(report);
    return 0;
}

// ---------------------------------------------------------------------------

// Entry point used by the binary and by tests. Exit codes: 0 success,
// 1 validation error, 2 runtime error.
inline int run(const std::vector<std::string>& argv) {
    CliArgs args;
    try {
        args = parse_args(argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n" << kUsage;
        return 1;
    }
    try {
        IniFile ini;
        try {
            ini = IniFile::load(args.config_path);
        } catch (const IoError& e) {
            throw InvalidConfig(e.what());
        }
        RunConfig rc = parse_run_config(ini);
        if (args.seed) {
            rc.train.seed = *args.seed;
            rc.split_seed = derive_seed(*args.seed, 1);
        }
        const std::filesystem::path base_dir =
            std::filesystem::absolute(args.config_path).parent_path();
        const std::filesystem::path out_dir(args.out_dir);
        std::filesystem::create_directories(out_dir);

        if (args.subcommand == "preprocess") return cmd_preprocess(rc, base_dir, out_dir);
        if (args.subcommand == "train") return cmd_train(rc, base_dir, out_dir);
        if (args.subcommand == "select") return cmd_select(rc, out_dir);
        if (args.subcommand == "ensemble") return cmd_ensemble(rc, base_dir, out_dir);
        if (args.subcommand == "explain") return cmd_explain(rc, base_dir, out_dir);
        if (args.subcommand == "evaluate") return cmd_evaluate(rc, base_dir, out_dir);
        std::cerr << "error: unhandled subcommand\n";
        return 1;
    } catch (const InvalidConfig& e) {
        std::cerr << "[" << args.subcommand << "] config error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "[" << args.subcommand << "] parse error: " << e.what() << "\n";
        return 1;
    } catch (const DuplicatePath& e) {
        std::cerr << "[" << args.subcommand << "] manifest error: " << e.what() << "\n";
        return 1;
    } catch (const EmptyManifest& e) {
        std::cerr << "[" << args.subcommand << "] manifest error: " << e.what() << "\n";
        return 1;
    } catch (const KTooLarge& e) {
        std::cerr << "[" << args.subcommand << "] config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "[" << args.subcommand << "] runtime error: " << e.what() << "\n";
        return 2;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace cli
}  // namespace xrx

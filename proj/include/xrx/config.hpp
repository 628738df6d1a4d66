#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xrx/ensemble.hpp"
#include "xrx/errors.hpp"
#include "xrx/network.hpp"
#include "xrx/preprocess.hpp"
#include "xrx/training.hpp"

namespace xrx {

// Minimal INI reader: [section] headers, `key = value` lines, `#`/`;`
// comments. Values keep internal whitespace; keys are section-scoped.
class IniFile {
public:
    static IniFile parse(std::istream& in) {
        IniFile ini;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ParseError("config line " + std::to_string(lineno) +
                                     ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw ParseError("config line " + std::to_string(lineno) + ": empty section");
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ParseError("config line " + std::to_string(lineno) + ": empty key");
            ini.values_[section + "." + key] = value;
        }
        return ini;
    }

    static IniFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("config: cannot open " + path);
        return parse(in);
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        auto it = values_.find(section + "." + key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw InvalidConfig("config: " + section + "." + key + " is not a number: " +
                                it->second);
        }
    }

    long get_int(const std::string& section, const std::string& key, long fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw InvalidConfig("config: " + section + "." + key +
                                " is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw InvalidConfig("config: " + section + "." + key + " is not a boolean: " + it->second);
    }

private:
    static std::string strip_comment(const std::string& s) {
        const auto pos = s.find_first_of("#;");
        return pos == std::string::npos ? s : s.substr(0, pos);
    }
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        const auto b = cur.find_first_not_of(" \t");
        const auto e = cur.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
    }
    return out;
}

// Compact layer syntax for config files:
//   conv:<out>:<kernel>[:<stride>[:<pad>]] | relu | maxpool:<k>:<s> | gap |
//   dense:<out> | dropout:<rate> | softmax
inline LayerSpec parse_layer_token(const std::string& token) {
    const auto parts = split_list(token, ':');
    const std::string& head = parts[0];
    auto want = [&](std::size_t lo, std::size_t hi) {
        if (parts.size() < lo + 1 || parts.size() > hi + 1)
            throw InvalidConfig("config: bad layer token `" + token + "`");
    };
    auto num = [&](std::size_t i) {
        try {
            return std::stoi(parts[i]);
        } catch (...) {
            throw InvalidConfig("config: bad number in layer token `" + token + "`");
        }
    };
    if (head == "conv") {
        want(2, 4);
        return LayerSpec::conv2d(num(1), num(2), parts.size() > 3 ? num(3) : 1,
                                 parts.size() > 4 ? num(4) : 0);
    }
    if (head == "relu") {
        want(0, 0);
        return LayerSpec::relu();
    }
    if (head == "maxpool") {
        want(2, 2);
        return LayerSpec::maxpool2d(num(1), num(2));
    }
    if (head == "gap") {
        want(0, 0);
        return LayerSpec::global_avg_pool();
    }
    if (head == "dense") {
        want(1, 1);
        return LayerSpec::dense(num(1));
    }
    if (head == "dropout") {
        want(1, 1);
        try {
            return LayerSpec::dropout(std::stof(parts[1]));
        } catch (const std::exception&) {
            throw InvalidConfig("config: bad dropout rate in `" + token + "`");
        }
    }
    if (head == "softmax") {
        want(0, 0);
        return LayerSpec::softmax();
    }
    throw InvalidConfig("config: unknown layer `" + head + "`");
}

inline std::vector<LayerSpec> parse_layer_list(const std::string& layers) {
    std::vector<LayerSpec> out;
    for (const std::string& tok : split_list(layers))
        if (!tok.empty()) out.push_back(parse_layer_token(tok));
    if (out.empty()) throw InvalidConfig("config: empty layer list");
    return out;
}

enum class EnsembleMethod { ScpaSumSoftmax, ScpaMean, Pm };
enum class EvalMode { Split, CrossValidation };

// Everything a run needs, assembled from one INI file.
struct RunConfig {
    // [data]
    std::string manifest_path;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 7;

    PreprocessConfig preprocess;
    bool standardize_auto = true;

    // [network]
    int input_channels = 3;
    std::vector<LayerSpec> layers;

    TrainConfig train;

    // [select]
    std::size_t select_top_k = 5;
    bool prefer_high_alpha = true;
    std::size_t spectral_min_dim = 8;

    // [ensemble]
    EnsembleMethod ensemble_method = EnsembleMethod::ScpaSumSoftmax;
    std::size_t ensemble_top_k = 2;

    // [explain]
    std::string explain_method = "grad-cam++";
    long explain_layer = -1;  // -1 = last conv layer
    double overlay_beta = 0.5;
    double lrp_lo = 0.0;
    double lrp_hi = 1.0;
    std::size_t explain_max_images = 16;

    // [evaluate]
    EvalMode eval_mode = EvalMode::Split;
    std::size_t cv_folds = 5;
};

namespace detail {

inline DiffusionVariant diffusion_variant_from_name(const std::string& s) {
    if (s == "c1") return DiffusionVariant::C1;
    if (s == "c2") return DiffusionVariant::C2;
    if (s == "c3") return DiffusionVariant::C3;
    throw InvalidConfig("config: diffusion variant must be c1, c2 or c3");
}

}  // namespace detail

inline RunConfig parse_run_config(const IniFile& ini) {
    RunConfig rc;

    rc.manifest_path = ini.get("data", "manifest", "");
    rc.test_fraction = ini.get_double("data", "test_fraction", 0.2);
    rc.split_seed = static_cast<std::uint64_t>(ini.get_int("data", "split_seed", 7));

    PreprocessConfig& pp = rc.preprocess;
    if (ini.has("preprocess", "stages")) {
        pp.stages.clear();
        for (const auto& s : split_list(ini.get("preprocess", "stages", "")))
            if (!s.empty()) pp.stages.push_back(stage_from_name(s));
    }
    pp.artifact_quantile = ini.get_double("preprocess", "artifact_quantile", 0.98);
    pp.artifact_component_frac = ini.get_double("preprocess", "artifact_component_frac", 0.01);
    pp.diffusion.gradient_threshold = ini.get_double("preprocess", "pm_threshold", 0.1);
    pp.diffusion.iterations = static_cast<int>(ini.get_int("preprocess", "pm_iterations", 20));
    pp.diffusion.lambda = ini.get_double("preprocess", "pm_lambda", 0.2);
    pp.diffusion.variant =
        detail::diffusion_variant_from_name(ini.get("preprocess", "pm_variant", "c3"));
    {
        const std::string k = ini.get("preprocess", "unsharp_kernel", "edge-enhance");
        if (k == "edge-enhance")
            pp.unsharp_kernel = UnsharpKernel::EdgeEnhance;
        else if (k == "sharpen")
            pp.unsharp_kernel = UnsharpKernel::Sharpen;
        else
            throw InvalidConfig("config: unsharp kernel must be edge-enhance or sharpen");
    }
    pp.output_side = static_cast<std::size_t>(ini.get_int("preprocess", "output_side", 224));
    pp.max_rotate_deg = ini.get_double("preprocess", "max_rotate_deg", 15.0);
    pp.augment_copies = static_cast<int>(ini.get_int("preprocess", "augment_copies", 0));
    rc.standardize_auto = ini.get("preprocess", "standardize", "auto") == "auto";
    pp.mean = ini.get_double("preprocess", "mean", 0.0);
    pp.std = ini.get_double("preprocess", "std", 1.0);

    rc.input_channels = static_cast<int>(ini.get_int("network", "input_channels", 3));
    if (ini.has("network", "layers")) rc.layers = parse_layer_list(ini.get("network", "layers", ""));

    rc.train.schedule.alpha0 = ini.get_double("schedule", "alpha0", 1.0);
    rc.train.schedule.total_epochs = static_cast<int>(ini.get_int("schedule", "total_epochs", 200));
    rc.train.schedule.cycles = static_cast<int>(ini.get_int("schedule", "cycles", 20));

    rc.train.batch_size = static_cast<std::size_t>(ini.get_int("train", "batch_size", 32));
    rc.train.l2 = ini.get_double("train", "l2", 0.0);
    rc.train.dropout_rate = static_cast<float>(ini.get_double("train", "dropout", -1.0));
    rc.train.seed = static_cast<std::uint64_t>(ini.get_int("train", "seed", 42));
    rc.train.val_fraction = ini.get_double("train", "val_fraction", 0.1);
    {
        const std::string cap = ini.get("train", "capture", "best-final-quarter");
        if (cap == "best-final-quarter")
            rc.train.capture = SnapshotCapture::BestValInFinalQuarter;
        else if (cap == "last-epoch")
            rc.train.capture = SnapshotCapture::LastEpoch;
        else
            throw InvalidConfig("config: capture must be best-final-quarter or last-epoch");
    }
    {
        const std::string w = ini.get("train", "class_weights", "auto");
        if (w != "auto") {
            for (const auto& tok : split_list(w)) {
                try {
                    rc.train.class_weight.push_back(std::stof(tok));
                } catch (const std::exception&) {
                    throw InvalidConfig("config: bad class weight `" + tok + "`");
                }
            }
        }
    }

    rc.select_top_k = static_cast<std::size_t>(ini.get_int("select", "top_k", 5));
    rc.prefer_high_alpha = ini.get_bool("select", "prefer_high_alpha", true);
    rc.spectral_min_dim = static_cast<std::size_t>(ini.get_int("select", "min_dim", 8));

    {
        const std::string m = ini.get("ensemble", "method", "scpa");
        if (m == "scpa")
            rc.ensemble_method = EnsembleMethod::ScpaSumSoftmax;
        else if (m == "scpa-mean")
            rc.ensemble_method = EnsembleMethod::ScpaMean;
        else if (m == "pm")
            rc.ensemble_method = EnsembleMethod::Pm;
        else
            throw InvalidConfig("config: ensemble method must be scpa, scpa-mean or pm");
    }
    rc.ensemble_top_k = static_cast<std::size_t>(ini.get_int("ensemble", "top_k", 2));

    rc.explain_method = ini.get("explain", "method", "grad-cam++");
    if (rc.explain_method != "grad-cam++" && rc.explain_method != "grad-cam" &&
        rc.explain_method != "cam" && rc.explain_method != "lrp")
        throw InvalidConfig("config: explain method must be cam, grad-cam, grad-cam++ or lrp");
    rc.explain_layer = ini.get_int("explain", "layer", -1);
    rc.overlay_beta = ini.get_double("explain", "beta", 0.5);
    rc.lrp_lo = ini.get_double("explain", "lrp_lo", 0.0);
    rc.lrp_hi = ini.get_double("explain", "lrp_hi", 1.0);
    rc.explain_max_images = static_cast<std::size_t>(ini.get_int("explain", "max_images", 16));

    {
        const std::string m = ini.get("evaluate", "mode", "split");
        if (m == "split")
            rc.eval_mode = EvalMode::Split;
        else if (m == "cv")
            rc.eval_mode = EvalMode::CrossValidation;
        else
            throw InvalidConfig("config: evaluate mode must be split or cv");
    }
    rc.cv_folds = static_cast<std::size_t>(ini.get_int("evaluate", "folds", 5));

    return rc;
}

}  // namespace xrx

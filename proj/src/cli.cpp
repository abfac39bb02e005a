#include "oiqa/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oiqa/attacks.hpp"
#include "oiqa/dataset.hpp"
#include "oiqa/defense.hpp"
#include "oiqa/error.hpp"
#include "oiqa/evaluate.hpp"
#include "oiqa/hash.hpp"
#include "oiqa/metrics.hpp"
#include "oiqa/network.hpp"
#include "oiqa/parallel.hpp"
#include "oiqa/serialize.hpp"
#include "oiqa/spectral.hpp"
#include "oiqa/train.hpp"

namespace oiqa {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr int kProvenanceVersion = 1;

struct OptionDef {
    std::string name;
    json fallback;
    std::string help;
};

struct Context {
    fs::path run_dir;
    unsigned threads = 1;
    std::ostream* err = nullptr;
    json inputs = json::object();
    json outputs = json::object();

    void write(const std::string& name, std::string_view bytes) {
        write_file(run_dir / name, bytes);
        outputs[name] = sha256_hex(bytes);
    }
    void log(const std::string& line) const { *err << line << '\n'; }
};

using Handler = std::function<json(const json& config, Context& ctx)>;

struct Subcommand {
    std::string name;
    std::string description;
    std::vector<OptionDef> options;
    Handler handler;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string require_path(const json& config, const char* key) {
    const std::string p = config.at(key).get<std::string>();
    if (p.empty()) throw ConfigError(std::string("--") + key + " is required");
    return p;
}

// Digest over labels.csv and every image file, in id order.
std::string dataset_digest(const fs::path& dir) {
    std::string acc = sha256_hex(read_file(dir / "labels.csv"));
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(dir / "images")) images.push_back(e.path());
    std::sort(images.begin(), images.end());
    for (const auto& p : images) acc += p.filename().string() + sha256_hex(read_file(p));
    return sha256_hex(acc);
}

std::vector<QualitySample> split_part(const LoadedDataset& d, const std::string& part) {
    if (part == "all") return d.samples;
    if (part == "train") return select(d.samples, d.split.train);
    if (part == "val") return select(d.samples, d.split.val);
    if (part == "test") return select(d.samples, d.split.test);
    throw ConfigError("--split must be one of train, val, test, all");
}

LoadedDataset load_input_dataset(const json& config, Context& ctx) {
    const fs::path dir = require_path(config, "data");
    ctx.inputs["data"] = dataset_digest(dir);
    return load_dataset(dir);
}

ModelGraph load_input_model(const json& config, Context& ctx) {
    const fs::path path = require_path(config, "model");
    const std::string bytes = read_file(path);
    ctx.inputs["model"] = sha256_hex(bytes);
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

double correlation_or_nan(const std::function<double()>& fn) {
    try {
        return fn();
    } catch (const CorrelationError&) {
        return std::nan("");
    }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double clean_srocc(const ModelGraph& m, const std::vector<QualitySample>& data, unsigned threads) {
    if (data.size() < 3) return std::nan("");
    const auto pred = predict(m, data, threads);
    std::vector<double> labels;
    for (const auto& s : data) labels.push_back(s.label);
    return correlation_or_nan([&] { return srocc(pred, labels); });
}

AttackConfig attack_from_config(const json& c) {
    AttackConfig a = default_attack_config(attack_kind_from_string(c.at("kind").get<std::string>()));
    a.steps = c.at("steps").get<std::size_t>();
    a.step_size = parse_epsilon(c.at("step_size").get<std::string>());
    a.flow_smoothness = c.at("tau").get<double>();
    a.seed = c.at("seed").get<std::uint64_t>();
    a.select_best = !c.at("last_iterate").get<bool>();
    a.random_start = c.at("random_start").get<bool>();
    validate_attack_config(a);
    return a;
}

// Fills kind-dependent attack defaults so the stored config is fully resolved.
void resolve_attack_defaults(json& c) {
    const AttackConfig d = default_attack_config(attack_kind_from_string(c.at("kind").get<std::string>()));
    if (c.at("steps").get<long long>() <= 0) c["steps"] = d.steps;
    if (c.at("step_size").get<std::string>().empty()) c["step_size"] = canonical_epsilon(d.step_size);
    else c["step_size"] = canonical_epsilon(parse_epsilon(c["step_size"].get<std::string>()));
}

json report_to_json(const RobustnessReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json eps = json::array();
    for (double e : r.epsilons) eps.push_back(canonical_epsilon(e));
    return {{"attack", r.attack},
            {"epsilons", eps},
            {"abs_gain_curve", r.abs_gain_curve},
            {"r_score_curve", r.r_score_curve},
            {"abs_gain", r.abs_gain},
            {"r_score", r.r_score},
            {"abs_gain_auc", opt(r.abs_gain_auc)},
            {"r_score_auc", opt(r.r_score_auc)},
            {"srocc", number_or_null(r.srocc)},
            {"plcc", number_or_null(r.plcc)},
            {"weights", r.weights},
            {"config_hash", r.config_hash}};
}

RobustnessReport report_from_json(const json& j) {
    RobustnessReport r;
    auto opt = [](const json& v) { return v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()}; };
    auto num = [](const json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
    try {
        r.attack = j.at("attack").get<std::string>();
        for (const auto& e : j.at("epsilons")) r.epsilons.push_back(parse_epsilon(e.get<std::string>()));
        r.abs_gain_curve = j.at("abs_gain_curve").get<std::vector<double>>();
        r.r_score_curve = j.at("r_score_curve").get<std::vector<double>>();
        r.abs_gain = j.at("abs_gain").get<double>();
        r.r_score = j.at("r_score").get<double>();
        r.abs_gain_auc = opt(j.at("abs_gain_auc"));
        r.r_score_auc = opt(j.at("r_score_auc"));
        r.srocc = num(j.at("srocc"));
        r.plcc = num(j.at("plcc"));
        r.weights = j.at("weights").get<std::vector<double>>();
        r.config_hash = j.at("config_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
    return r;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// ---------------------------------------------------------------- handlers

json cmd_gen_data(const json& c, Context& ctx) {
    const auto n = c.at("n").get<std::size_t>();
    const auto size = c.at("size").get<std::size_t>();
    const auto seed = c.at("seed").get<std::uint64_t>();
    if (n < 1) throw ConfigError("--n must be >= 1");
    if (size < 1 || size > kMaxImageSize) throw ConfigError("--size must be in [1, 64]");
    const auto samples = generate_dataset(n, size, seed);
    const fs::path dir = ctx.run_dir / "dataset";
    save_dataset(dir, samples, seed);
    ctx.outputs["dataset"] = dataset_digest(dir);
    const auto split = split_dataset(n, seed);
    ctx.log("wrote " + std::to_string(n) + " samples to " + dir.string());
    return {{"n", n}, {"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()},
            {"dataset", dir.string()}};
}

json cmd_train(const json& c, Context& ctx) {
    const LoadedDataset data = load_input_dataset(c, ctx);
    if (data.samples.empty()) throw InputError("dataset is empty");
    const Shape& shape = data.samples[0].image.shape();
    if (shape[1] != shape[2]) throw ShapeError("toy model expects square images");
    ToyModelOptions mo;
    mo.channels = shape[0];
    mo.image_size = shape[1];
    mo.hidden = c.at("hidden").get<std::size_t>();
    const auto seed = c.at("seed").get<std::uint64_t>();
    ModelGraph model = make_toy_model(mo, seed);

    TrainConfig tc;
    tc.epochs = c.at("epochs").get<std::size_t>();
    tc.lr = c.at("lr").get<double>();
    tc.batch_size = c.at("batch").get<std::size_t>();
    const std::string opt = c.at("optimizer").get<std::string>();
    if (opt != "adam" && opt != "sgd") throw ConfigError("--optimizer must be adam or sgd");
    tc.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
    tc.nt_lambda = c.at("nt_lambda").get<double>();
    tc.nt_step = c.at("nt_step").get<double>();
    tc.seed = seed;
    tc.threads = ctx.threads;
    if (tc.epochs < 1 || tc.batch_size < 1 || !(tc.lr > 0.0)) throw ConfigError("epochs, batch and lr must be positive");

    const auto train_set = select(data.samples, data.split.train);
    if (train_set.empty()) throw InputError("training split is empty");
    const TrainResult result = train(model, train_set, tc);

    std::string loss = "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e)
        loss += std::to_string(e) + "," + fmt(result.loss_curve[e]) + "\n";
    ctx.write("loss.csv", loss);
    ctx.write("model.ckpt", encode_checkpoint(model));

    const double val = clean_srocc(model, select(data.samples, data.split.val), ctx.threads);
    const double test = clean_srocc(model, select(data.samples, data.split.test), ctx.threads);
    ctx.log("final loss " + fmt(result.loss_curve.back()) + ", val SROCC " + fmt(val) + ", test SROCC " + fmt(test));
    return {{"final_loss", result.loss_curve.back()},
            {"val_srocc", number_or_null(val)},
            {"test_srocc", number_or_null(test)},
            {"model", (ctx.run_dir / "model.ckpt").string()}};
}

json cmd_certify(const json& c, Context& ctx) {
    const ModelGraph model = load_input_model(c, ctx);
    const auto shapes = infer_shapes(model);
    const auto scores = placement_scan(model);
    std::string csv = "layer_index,c_in,c_out,s_in,s_out,ratio,sigma1,frobenius\n";
    auto side = [](std::size_t h, std::size_t w) { return h == w ? std::to_string(h) : std::to_string(h) + "x" + std::to_string(w); };
    for (const auto& s : scores) {
        const Tensor& kernel = model.param(model.layers[s.layer_index].param_ids.at(0));
        const auto spec = conv_spectrum(kernel, std::max(s.h_in, s.w_in), ConvSemantics::circular);
        csv += std::to_string(s.layer_index) + "," + std::to_string(s.c_in) + "," + std::to_string(s.c_out) + "," +
               side(s.h_in, s.w_in) + "," + side(s.h_out, s.w_out) + "," + fmt(s.ratio) + "," + fmt(spec.spectral_norm) +
               "," + fmt(spec.frobenius_norm) + "\n";
    }
    ctx.write("certify.csv", csv);

    json blocks = json::array();
    const Network net(model);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].kind != LayerKind::robust_block) continue;
        const auto& op = net.cayley(i);
        const auto spec = cayley_spectrum(op);
        blocks.push_back({{"layer", i},
                          {"orthogonality_residual", op.orthogonality_residual()},
                          {"sigma1", spec.spectral_norm}});
    }
    const std::size_t rec = scores.empty() ? 0 : recommend_placement(scores);
    ctx.log("placement recommendation: layer " + std::to_string(rec));
    return {{"conv_layers", scores.size()},
            {"recommended_position", scores.empty() ? json(nullptr) : json(rec)},
            {"robust_blocks", blocks}};
}

json cmd_defend(const json& c, Context& ctx) {
    const ModelGraph model = load_input_model(c, ctx);
    const LoadedDataset data = load_input_dataset(c, ctx);
    const auto train_set = select(data.samples, data.split.train);

    DefenseOptions o;
    o.skip_block = c.at("skip_block").get<bool>();
    const long long pos = c.at("position").get<long long>();
    if (pos >= 0) o.position = static_cast<std::size_t>(pos);
    o.prune.rate = c.at("rate").get<double>();
    o.prune.criterion = prune_criterion_from_string(c.at("criterion").get<std::string>());
    const std::string act = c.at("activation").get<std::string>();
    if (act != "none") o.activation = layer_kind_from_string(act);
    const std::string mode = c.at("activation_mode").get<std::string>();
    if (mode != "full" && mode != "partial") throw ConfigError("--activation-mode must be full or partial");
    o.activation_mode = mode == "full" ? ReplaceMode::full : ReplaceMode::partial;
    o.fine_tune.epochs = c.at("epochs").get<std::size_t>();
    o.fine_tune.lr = c.at("lr").get<double>();
    o.fine_tune.batch_size = c.at("batch").get<std::size_t>();
    o.fine_tune.threads = ctx.threads;
    o.seed = c.at("seed").get<std::uint64_t>();

    const DefenseResult r = defend(model, train_set, o);
    std::string prune = "layer,channel,value,masked\n";
    for (const auto& s : r.prune.scores) {
        const auto it = r.prune.masked.find(s.layer);
        const bool masked = it != r.prune.masked.end() &&
                            std::find(it->second.begin(), it->second.end(), s.channel) != it->second.end();
        prune += std::to_string(s.layer) + "," + std::to_string(s.channel) + "," + fmt(s.value) + "," +
                 (masked ? "1" : "0") + "\n";
    }
    ctx.write("prune.csv", prune);
    ctx.write("defense.json", json::parse(r.provenance).dump(2) + "\n");
    ctx.write("defended.ckpt", encode_checkpoint(r.model));
    const double before = clean_srocc(model, select(data.samples, data.split.val), ctx.threads);
    const double after = clean_srocc(r.model, select(data.samples, data.split.val), ctx.threads);
    ctx.log("val SROCC " + fmt(before) + " -> " + fmt(after));
    return {{"block_position", r.block_position ? json(*r.block_position) : json(nullptr)},
            {"total_masked", r.prune.total_masked},
            {"activations_replaced", r.activations.replaced.size()},
            {"val_srocc_before", number_or_null(before)},
            {"val_srocc_after", number_or_null(after)},
            {"model", (ctx.run_dir / "defended.ckpt").string()}};
}

json cmd_attack(const json& c, Context& ctx) {
    const ModelGraph model = load_input_model(c, ctx);
    const LoadedDataset data = load_input_dataset(c, ctx);
    const auto samples = split_part(data, c.at("split").get<std::string>());
    if (samples.empty()) throw InputError("selected split is empty");
    AttackConfig a = attack_from_config(c);
    a.epsilon = parse_epsilon(c.at("eps").get<std::string>());
    validate_attack_config(a);

    std::vector<Tensor> images;
    for (const auto& s : samples) images.push_back(s.image);
    const AttackResult r = run_attack(model, images, a, ctx.threads);

    std::string csv = "image_id,clean,attacked,delta,linf\n";
    double mean_delta = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& o = r.images[i];
        csv += samples[i].id + "," + fmt(o.clean_score) + "," + fmt(o.attacked_score) + "," +
               fmt(o.attacked_score - o.clean_score) + "," + fmt(o.linf) + "\n";
        mean_delta += o.attacked_score - o.clean_score;
    }
    mean_delta /= static_cast<double>(samples.size());
    ctx.write("attack.csv", csv);
    if (a.kind == AttackKind::uap) {
        ctx.write("perturbations/universal.qten", encode_tensor(r.perturbations[0]));
    } else if (c.at("save_perturbations").get<bool>()) {
        for (std::size_t i = 0; i < samples.size(); ++i)
            ctx.write("perturbations/" + samples[i].id + ".qten", encode_tensor(r.perturbations[i]));
    }

    json summary = {{"n", samples.size()}, {"mean_delta", mean_delta}};
    if (model.score_range) {
        std::vector<ScorePair> pairs;
        for (const auto& o : r.images)
            pairs.push_back({normalize(o.clean_score, *model.score_range), normalize(o.attacked_score, *model.score_range)});
        summary["abs_gain"] = abs_gain(pairs);
        summary["r_score"] = r_score(pairs);
    }
    if (a.kind == AttackKind::stadv) summary["mean_flow"] = r.mean_flow;
    ctx.log(std::string(to_string(a.kind)) + " attack on " + std::to_string(samples.size()) + " images, mean delta " +
            fmt(mean_delta));
    return summary;
}

json cmd_eval(const json& c, Context& ctx) {
    const ModelGraph model = load_input_model(c, ctx);
    const LoadedDataset data = load_input_dataset(c, ctx);
    const auto samples = split_part(data, c.at("split").get<std::string>());
    const AttackConfig a = attack_from_config(c);
    std::vector<double> grid;
    for (const auto& e : split_list(c.at("eps_grid").get<std::string>())) grid.push_back(parse_epsilon(e));

    const RobustnessReport r = evaluate_robustness(model, samples, a, grid, ctx.threads);
    ctx.write("report.json", report_to_json(r).dump(2) + "\n");
    std::string csv = "epsilon,image_id,clean,attacked\n";
    for (std::size_t k = 0; k < r.epsilons.size(); ++k)
        for (std::size_t i = 0; i < samples.size(); ++i)
            csv += canonical_epsilon(r.epsilons[k]) + "," + samples[i].id + "," + fmt(r.pairs[k][i].clean) + "," +
                   fmt(r.pairs[k][i].attacked) + "\n";
    ctx.write("per_image.csv", csv);
    if (!c.at("no_plots").get<bool>() && r.epsilons.size() > 1) {
        ctx.write("abs_gain.svg", svg_curve_plot("AbsGain vs epsilon", "AbsGain", r.epsilons, {{r.attack, r.abs_gain_curve}}));
        ctx.write("r_score.svg", svg_curve_plot("R-Score vs epsilon", "R-Score", r.epsilons, {{r.attack, r.r_score_curve}}));
    }
    ctx.log("SROCC " + fmt(r.srocc) + ", AbsGain " + fmt(r.abs_gain) + ", R-Score " + fmt(r.r_score));
    json s = report_to_json(r);
    s.erase("abs_gain_curve");
    s.erase("r_score_curve");
    return s;
}

json cmd_report(const json& c, Context& ctx) {
    const auto files = split_list(c.at("reports").get<std::string>());
    if (files.empty() || files.size() > 2) throw ConfigError("--reports takes one or two report.json paths");
    std::vector<RobustnessReport> reports;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string bytes = read_file(files[i]);
        ctx.inputs["report" + std::to_string(i)] = sha256_hex(bytes);
        json j;
        try {
            j = json::parse(bytes);
        } catch (const json::exception& e) {
            throw FormatError(files[i] + ": " + e.what());
        }
        reports.push_back(report_from_json(j));
    }
    RobustnessReport combined = reports[0];
    if (reports.size() == 2) {
        const auto w = split_list(c.at("weights").get<std::string>());
        if (w.size() != 2) throw ConfigError("--weights takes two comma-separated values");
        combined = weighted_summary(reports[0], reports[1], {parse_epsilon(w[0]), parse_epsilon(w[1])});
    }
    json summary = report_to_json(combined);
    const std::string baseline = c.at("baseline").get<std::string>();
    if (!baseline.empty()) {
        const std::string bytes = read_file(baseline);
        ctx.inputs["baseline"] = sha256_hex(bytes);
        const RobustnessReport b = report_from_json(json::parse(bytes));
        const bool use_auc = combined.abs_gain_auc && b.abs_gain_auc;
        const GainComparison g = use_auc ? compare_gain(*combined.abs_gain_auc, *b.abs_gain_auc)
                                         : compare_gain(combined.abs_gain, b.abs_gain);
        summary["comparison"] = {{"metric", use_auc ? "abs_gain_auc" : "abs_gain"},
                                 {"defended", g.defended},
                                 {"baseline", g.baseline},
                                 {"defended_lower", g.defended_lower}};
        if (combined.epsilons.size() > 1 && combined.epsilons == b.epsilons)
            ctx.write("abs_gain.svg", svg_curve_plot("AbsGain vs epsilon", "AbsGain", combined.epsilons,
                                                     {{"defended", combined.abs_gain_curve}, {"baseline", b.abs_gain_curve}}));
    } else if (combined.epsilons.size() > 1) {
        ctx.write("abs_gain.svg",
                  svg_curve_plot("AbsGain vs epsilon", "AbsGain", combined.epsilons, {{combined.attack, combined.abs_gain_curve}}));
    }
    ctx.write("summary.json", summary.dump(2) + "\n");
    summary.erase("abs_gain_curve");
    summary.erase("r_score_curve");
    return summary;
}

// ---------------------------------------------------------------- table

std::vector<OptionDef> attack_options(bool grid) {
    std::vector<OptionDef> o{
        {"model", "", "input checkpoint"},
        {"data", "", "dataset directory"},
        {"kind", "pgd", "pgd, uap or stadv"},
        {"steps", 0, "iterations (0: 10 for pgd/uap, 5 for stadv)"},
        {"step_size", "", "step size, e.g. 1/255 (empty: 1/255, or 0.25 px for stadv)"},
        {"tau", 0.05, "stadv flow smoothness weight"},
        {"split", "test", "train, val, test or all"},
        {"last_iterate", false, "report the last iterate instead of the best"},
        {"random_start", false, "pgd: start from a random point in the ball"},
        {"seed", 0, "random seed"},
    };
    if (grid) {
        o.push_back({"eps_grid", "2/255,4/255,6/255,8/255,10/255", "comma-separated epsilons"});
        o.push_back({"no_plots", false, "skip SVG plots"});
    } else {
        o.push_back({"eps", "8/255", "l-inf budget, e.g. 4/255"});
        o.push_back({"save_perturbations", false, "write per-image perturbation tensors"});
    }
    return o;
}

std::vector<Subcommand> subcommands() {
    return {
        {"gen-data", "generate a synthetic quality-labelled dataset",
         {{"n", 1000, "number of samples"}, {"size", 32, "image side length (<= 64)"}, {"seed", 0, "random seed"}},
         cmd_gen_data},
        {"train", "train the toy IQA model",
         {{"data", "", "dataset directory"},
          {"epochs", 30, "training epochs"},
          {"lr", 3e-3, "learning rate"},
          {"batch", 16, "batch size"},
          {"optimizer", "adam", "adam or sgd"},
          {"hidden", 16, "head width"},
          {"nt_lambda", 0.0, "input-gradient norm penalty weight"},
          {"nt_step", 1e-4, "finite-difference step for the penalty gradient"},
          {"seed", 0, "random seed"}},
         cmd_train},
        {"certify", "per-layer spectral and placement analysis", {{"model", "", "input checkpoint"}}, cmd_certify},
        {"defend", "insert a robust block, prune and fine-tune",
         {{"model", "", "input checkpoint"},
          {"data", "", "dataset directory (train split is used)"},
          {"position", -1, "conv layer to insert before (-1: placement scan)"},
          {"skip_block", false, "do not insert a robust block"},
          {"rate", 0.1, "pruning rate in [0, 1)"},
          {"criterion", "l2", "l1 or l2"},
          {"activation", "none", "replace ReLUs with elu, silu or gelu"},
          {"activation_mode", "partial", "full or partial"},
          {"epochs", 5, "fine-tuning epochs"},
          {"lr", 3e-4, "fine-tuning learning rate"},
          {"batch", 16, "fine-tuning batch size"},
          {"seed", 0, "random seed"}},
         cmd_defend},
        {"attack", "run one attack over a dataset split", attack_options(false), cmd_attack},
        {"eval", "clean correlations and robustness over an epsilon grid", attack_options(true), cmd_eval},
        {"report", "combine evaluation reports",
         {{"reports", "", "one or two report.json paths, comma-separated"},
          {"weights", "2/3,1/3", "weights for two reports"},
          {"baseline", "", "baseline report.json for the defense comparison"}},
         cmd_report},
    };
}

std::string flag_name(const std::string& key) {
    std::string s = key;
    std::replace(s.begin(), s.end(), '_', '-');
    return "--" + s;
}

json coerce(const OptionDef& def, const std::string& text) {
    try {
        switch (def.fallback.type()) {
            case json::value_t::number_integer:
            case json::value_t::number_unsigned: {
                std::size_t used = 0;
                const long long v = std::stoll(text, &used);
                if (used != text.size()) break;
                return v;
            }
            case json::value_t::number_float: {
                std::size_t used = 0;
                const double v = std::stod(text, &used);
                if (used != text.size()) break;
                return v;
            }
            default: return text;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError(flag_name(def.name) + ": cannot parse '" + text + "'");
}

void canonicalize(const std::string& sub, json& config) {
    if (sub == "attack" || sub == "eval") {
        resolve_attack_defaults(config);
        if (config.contains("eps")) config["eps"] = canonical_epsilon(parse_epsilon(config["eps"].get<std::string>()));
        if (config.contains("eps_grid")) {
            std::string grid;
            for (const auto& e : split_list(config["eps_grid"].get<std::string>()))
                grid += (grid.empty() ? "" : ",") + canonical_epsilon(parse_epsilon(e));
            config["eps_grid"] = grid;
        }
    }
}

json config_from_file(const Subcommand& sub, const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path + ": not a JSON document: " + e.what());
    }
    if (!doc.contains("subcommand") || doc["subcommand"] != sub.name)
        throw ConfigError(path + ": provenance is for a different subcommand");
    if (!doc.contains("config") || !doc["config"].is_object()) throw ConfigError(path + ": missing config object");
    json config = json::object();
    for (const auto& def : sub.options) config[def.name] = def.fallback;
    for (const auto& [key, value] : doc["config"].items()) {
        const auto it = std::find_if(sub.options.begin(), sub.options.end(), [&](const auto& d) { return d.name == key; });
        if (it == sub.options.end()) throw ConfigError(path + ": unknown config key '" + key + "'");
        const bool numeric = it->fallback.is_number() && value.is_number();
        if (!numeric && value.type() != it->fallback.type())
            throw ConfigError(path + ": config key '" + key + "' has the wrong type");
        config[key] = value;
    }
    if (doc.contains("inputs")) {
        // stored for verification after the run
        config["__expected_inputs"] = doc["inputs"];
    }
    return config;
}

std::string utc_stamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

fs::path fresh_run_dir(const fs::path& base, const std::string& sub, const std::string& hash) {
    const std::string stem = sub + "-" + utc_stamp() + "-" + hash.substr(0, 8);
    fs::path dir = base / stem;
    for (int k = 2; fs::exists(dir); ++k) dir = base / (stem + "-" + std::to_string(k));
    fs::create_directories(dir);
    return dir;
}

unsigned resolve_threads(int flag) {
    if (flag > 0) return static_cast<unsigned>(flag);
    if (flag < 0) throw ConfigError("--threads must be positive");
    if (const char* env = std::getenv("OIQA_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ConfigError("OIQA_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return default_threads();
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::data: return 2;
        case ErrorKind::numerical: return 3;
    }
    return 2;
}

int report_failure(std::exception_ptr ep, std::ostream& out, std::ostream& err) {
    int code = 2;
    std::string message;
    try {
        std::rethrow_exception(ep);
    } catch (const Error& e) {
        code = exit_code(e.kind());
        message = e.what();
    } catch (const json::exception& e) {
        code = 1;
        message = std::string("configuration: ") + e.what();
    } catch (const std::exception& e) {
        message = e.what();
    }
    err << "error: " << message << "\n";
    out << json{{"status", "error"}, {"exit_code", code}, {"message", message}}.dump() << "\n";
    return code;
}

}  // namespace

double parse_epsilon(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (s.empty() || used != s.size() || !std::isfinite(v))
            throw ConfigError("cannot parse '" + text + "' as a number or k/255 fraction");
        return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string::npos) return number(text);
    const double den = number(text.substr(slash + 1));
    if (den == 0.0) throw ConfigError("zero denominator in '" + text + "'");
    return number(text.substr(0, slash)) / den;
}

std::string canonical_epsilon(double value) {
    const double k = value * 255.0;
    if (std::abs(k - std::round(k)) < 1e-9 && std::abs(k) < 1e9) {
        const double r = std::round(k);
        if (r / 255.0 == value || std::abs(r / 255.0 - value) < 1e-15) return std::to_string(static_cast<long long>(r)) + "/255";
    }
    return fmt(value);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto subs = subcommands();
    CLI::App app("oiqa: orthogonal robust blocks for image quality models", "oiqa");
    app.require_subcommand(1, 1);
    std::string out_dir = "runs";
    int threads_flag = 0;
    app.add_option("--out", out_dir, "parent directory for run directories")->capture_default_str();
    app.add_option("--threads", threads_flag, "worker threads (default: OIQA_THREADS, else all cores)");

    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::map<std::string, bool>> flags;
    std::map<std::string, std::string> config_paths;
    std::map<std::string, CLI::App*> apps;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.description);
        apps[s.name] = sub;
        sub->add_option("--config", config_paths[s.name], "replay a provenance.json");
        sub->add_option("--out", out_dir, "parent directory for run directories");
        sub->add_option("--threads", threads_flag, "worker threads");
        for (const auto& d : s.options) {
            if (d.fallback.is_boolean()) {
                sub->add_flag(flag_name(d.name), flags[s.name][d.name], d.help);
            } else {
                sub->add_option(flag_name(d.name), values[s.name][d.name], d.help + " (default " + d.fallback.dump() + ")");
            }
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    Context ctx;
    const Subcommand* chosen = nullptr;
    for (const auto& s : subs)
        if (apps[s.name]->parsed()) chosen = &s;

    try {
        if (!chosen) throw ConfigError("no subcommand given");
        CLI::App* sub = apps[chosen->name];
        json config = json::object();
        json expected_inputs;
        if (!config_paths[chosen->name].empty()) {
            for (const auto& d : chosen->options)
                if (sub->count(flag_name(d.name)) > 0)
                    throw ConfigError("--config cannot be combined with " + flag_name(d.name));
            config = config_from_file(*chosen, config_paths[chosen->name]);
            if (config.contains("__expected_inputs")) {
                expected_inputs = config["__expected_inputs"];
                config.erase("__expected_inputs");
            }
        } else {
            for (const auto& d : chosen->options) {
                if (d.fallback.is_boolean()) {
                    config[d.name] = flags[chosen->name][d.name];
                } else if (sub->count(flag_name(d.name)) > 0) {
                    config[d.name] = coerce(d, values[chosen->name][d.name]);
                } else {
                    config[d.name] = d.fallback;
                }
            }
        }
        canonicalize(chosen->name, config);

        ctx.threads = resolve_threads(threads_flag);
        ctx.err = &err;
        const std::string config_hash = sha256_hex(config.dump());
        ctx.run_dir = fresh_run_dir(out_dir, chosen->name, config_hash);
        json summary = chosen->handler(config, ctx);

        if (!expected_inputs.is_null() && expected_inputs != ctx.inputs)
            err << "warning: inputs differ from the recorded provenance\n";
        json prov;
        prov["tool"] = "oiqa";
        prov["version"] = kProvenanceVersion;
        prov["subcommand"] = chosen->name;
        prov["config"] = config;
        prov["config_sha256"] = config_hash;
        prov["inputs"] = ctx.inputs;
        prov["outputs"] = ctx.outputs;
        write_file(ctx.run_dir / "provenance.json", prov.dump(2) + "\n");

        json line;
        line["status"] = "ok";
        line["subcommand"] = chosen->name;
        line["run_dir"] = ctx.run_dir.string();
        for (auto& [k, v] : summary.items()) line[k] = v;
        out << line.dump() << "\n";
        return 0;
    } catch (...) {
        if (!ctx.run_dir.empty()) {
            std::error_code ec;
            fs::remove_all(ctx.run_dir, ec);
        }
        return report_failure(std::current_exception(), out, err);
    }
}

}  // namespace oiqa

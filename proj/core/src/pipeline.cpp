#include "taskden/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "taskden/hash.hpp"
#include "taskden/metrics.hpp"
#include "taskden/phantom.hpp"

namespace taskden {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kFeatureNetStream = 23;
constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

LoadedDataset load_dataset(const Config& config) {
    const fs::path manifest = config.data.output_dir / kManifestName;
    if (!fs::exists(manifest)) {
        throw IoError("dataset manifest not found at " + manifest.string() + " (run gen-data first)");
    }
    return load_cases(read_manifest(manifest));
}

std::unique_ptr<Network> load_frozen(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing checkpoint " + path.string());
    auto net = load_network(path);
    net->set_training(false);
    net->freeze();
    return net;
}

void write_epoch_log(const fs::path& path, const std::vector<EpochRecord>& epochs, const char* metric) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch," << metric << ",wall_seconds\n";
    for (const auto& e : epochs) out << e.epoch << ',' << format_number(e.metric) << ',' << fixed(e.wall_seconds, 1) << '\n';
}

std::vector<const Case*> select_cases(const std::vector<Case>& test, const std::string& selector, std::size_t limit) {
    std::vector<const Case*> out;
    if (selector == "all") {
        for (const Case& c : test) {
            if (limit && out.size() >= limit) break;
            out.push_back(&c);
        }
        return out;
    }
    for (const Case& c : test) {
        if (c.id == selector) out.push_back(&c);
    }
    if (out.empty()) throw std::invalid_argument("case '" + selector + "' is not in the test split");
    return out;
}

struct Stage {
    std::string name;
    std::string started_at;
    std::string finished_at;
    std::vector<fs::path> outputs;
};

nlohmann::json stage_json(const Stage& s, const fs::path& root) {
    nlohmann::json outputs = nlohmann::json::array();
    std::vector<fs::path> files = s.outputs;
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        outputs.push_back({{"path", fs::relative(f, root).generic_string()}, {"sha256", file_sha256(f)}});
    }
    return {{"name", s.name}, {"started_at", s.started_at}, {"finished_at", s.finished_at}, {"outputs", outputs}};
}

void with_sidecar(std::vector<fs::path>& out, const fs::path& ckpt) {
    if (!fs::exists(ckpt)) return;
    out.push_back(ckpt);
    fs::path arch = ckpt;
    arch += ".arch";
    if (fs::exists(arch)) out.push_back(arch);
}

}  // namespace

fs::path RunLayout::segmenter(SegmenterKind kind) const {
    return root / "segmenters" / (std::string(segmenter_name(kind)) + ".ckpt");
}
fs::path RunLayout::segmenter_log(SegmenterKind kind) const {
    return root / "logs" / (std::string(segmenter_name(kind)) + "_pretrain.csv");
}
fs::path RunLayout::denoiser(const std::string& variant) const { return root / "denoisers" / (variant + ".ckpt"); }
fs::path RunLayout::denoiser_last(const std::string& variant) const {
    return root / "denoisers" / (variant + "_last.ckpt");
}
fs::path RunLayout::denoiser_half(const std::string& variant) const {
    return root / "denoisers" / (variant + "_half.ckpt");
}
fs::path RunLayout::train_log(const std::string& variant) const { return root / "logs" / (variant + "_train.csv"); }
fs::path RunLayout::epoch_log(const std::string& variant) const { return root / "logs" / (variant + "_epochs.csv"); }

bool AcceptanceReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const AcceptanceCheck& c) { return c.passed; });
}

DatasetSplit cmd_gen_data(const Config& config, bool force, std::ostream& log) {
    log << "generating " << config.data.n_train + config.data.n_val + config.data.n_test << " cases ("
        << config.data.size << "x" << config.data.size << ", " << config.data.simulator.photons_per_ray
        << " photons/ray) into " << config.data.output_dir.string() << "\n";
    DatasetSplit split = build_dataset(config.data, force);
    std::vector<double> values;
    for (const Case& c : load_cases(split).test) values.push_back(psnr(c.ldct, c.ndct));
    log << "train=" << split.train.size() << " val=" << split.val.size() << " test=" << split.test.size()
        << " mean_test_ldct_psnr=" << fixed(mean_of(values), 2) << " dB\n";
    return split;
}

std::vector<SegmenterSummary> cmd_pretrain_seg(const Config& config, const std::vector<SegmenterKind>& kinds,
                                               std::ostream& log) {
    const LoadedDataset data = load_dataset(config);
    const RunLayout layout(config);
    std::vector<SegmenterSummary> out;
    for (SegmenterKind kind : kinds) {
        log << "pretraining " << segmenter_name(kind) << " for " << config.segmenter_training.epochs << " epochs\n"
            << std::flush;
        const fs::path ckpt = layout.segmenter(kind);
        SegmenterResult r = pretrain_segmenter(kind, data, config.segmenter_training, ckpt);
        if (stop_requested()) throw std::runtime_error("interrupted");
        write_epoch_log(layout.segmenter_log(kind), r.epochs, "val_dice");
        out.push_back({kind, r.best_epoch, r.test_dice_ndct, r.test_dice_ldct, ckpt});
        log << segmenter_name(kind) << " best_epoch=" << r.best_epoch << "\n"
            << segmenter_name(kind) << " ndct_test_dice=" << fixed(r.test_dice_ndct) << "\n"
            << segmenter_name(kind) << " ldct_test_dice=" << fixed(r.test_dice_ldct) << "\n"
            << std::flush;
    }
    std::vector<SegmenterSummary> all = out;
    const fs::path summary = layout.segmenter_summary();
    fs::create_directories(summary.parent_path());
    std::ofstream csv(summary, std::ios::trunc);
    csv << "segmenter,best_epoch,ndct_test_dice,ldct_test_dice\n";
    for (const auto& s : all) {
        csv << segmenter_name(s.kind) << ',' << s.best_epoch << ',' << format_number(s.ndct_test_dice) << ','
            << format_number(s.ldct_test_dice) << '\n';
    }
    return out;
}

DenoiserSummary cmd_train_denoiser(const Config& config, LossVariant variant, const fs::path& segmenter_checkpoint,
                                   std::ostream& log) {
    const LoadedDataset data = load_dataset(config);
    const RunLayout layout(config);
    TrainConfig tc = config.training;
    tc.loss_variant = variant;
    const std::string name = variant_name(variant);

    std::unique_ptr<Network> segmenter;
    const fs::path seg_path = segmenter_checkpoint.empty() ? layout.segmenter(config.representative)
                                                           : segmenter_checkpoint;
    const bool needs_segmenter = variant == LossVariant::tod || tc.resolved_metric() == CheckpointMetric::val_dice;
    if (needs_segmenter) {
        if (!fs::exists(seg_path)) {
            throw IoError("variant " + name + " needs a pretrained segmenter checkpoint; " + seg_path.string() +
                          " not found (run pretrain-seg or pass --segmenter)");
        }
        segmenter = load_frozen(seg_path);
    }
    log << "training denoiser variant=" << name << " epochs=" << tc.epochs << " metric=" << metric_name(tc.resolved_metric())
        << "\n"
        << std::flush;
    DenoiserOutputs outputs{layout.denoiser(name), layout.denoiser_last(name), layout.denoiser_half(name),
                            layout.train_log(name)};
    DenoiserResult r = train_denoiser(data, segmenter.get(), tc, outputs);
    write_epoch_log(layout.epoch_log(name), r.log.epochs, metric_name(tc.resolved_metric()));
    for (const auto& e : r.log.epochs) {
        log << "  epoch " << e.epoch << " " << metric_name(tc.resolved_metric()) << "=" << fixed(e.metric) << "\n";
    }
    log << name << " best_epoch=" << r.best_epoch << " steps=" << r.log.steps.size()
        << (r.interrupted ? " (interrupted)" : "") << "\n"
        << std::flush;
    return {name, r.best_epoch, r.log.steps.size(), r.interrupted, outputs.best};
}

EvaluationSummary cmd_evaluate(const Config& config, std::ostream& log) {
    const LoadedDataset data = load_dataset(config);
    const RunLayout layout(config);
    EvaluationSummary summary;

    std::vector<std::unique_ptr<Network>> owned;
    std::vector<VariantModel> variants;
    for (const std::string& v : config.eval_variants) {
        if (v == "none") {
            variants.push_back({v, nullptr});
        } else if (fs::exists(layout.denoiser(v))) {
            owned.push_back(load_frozen(layout.denoiser(v)));
            variants.push_back({v, owned.back().get()});
        } else {
            log << "warning: no checkpoint for variant " << v << " at " << layout.denoiser(v).string()
                << "; skipping\n";
            continue;
        }
        summary.variants.push_back(v);
    }
    std::vector<SegmenterModel> segmenters;
    for (SegmenterKind k : config.segmenters) {
        owned.push_back(load_frozen(layout.segmenter(k)));
        segmenters.push_back({k, owned.back().get()});
        summary.ndct_dice[segmenter_name(k)] = mean_dice(*owned.back(), data.test, nullptr, false);
    }

    summary.quality = evaluate_quality(variants, data.test);
    DownstreamResult downstream = evaluate_downstream(variants, segmenters, data.test);
    summary.dice = std::move(downstream.dice);
    summary.significance = std::move(downstream.significance);

    const fs::path dir = layout.eval_dir();
    summary.outputs = {dir / "quality.csv", dir / "quality_summary.csv", dir / "dice.csv", dir / "significance.csv"};
    write_quality_csv(summary.outputs[0], summary.quality);
    write_quality_summary_csv(summary.outputs[1], summarize_quality(summary.quality));
    write_dice_csv(summary.outputs[2], summary.dice);
    write_significance_csv(summary.outputs[3], summary.significance);

    log << "variant      region  ssim     rmse     psnr\n";
    for (const auto& r : summarize_quality(summary.quality)) {
        log << std::left << std::setw(12) << r.variant << " " << std::setw(7) << r.region << " " << fixed(r.ssim)
            << "  " << fixed(r.rmse) << "  " << fixed(r.psnr, 2) << "\n";
    }
    log << "mean test dice (segmenter: ndct";
    for (const auto& v : summary.variants) log << ", " << v;
    log << ")\n";
    for (const auto& s : segmenters) {
        const std::string seg = segmenter_name(s.kind);
        log << "  " << seg << ": " << fixed(summary.ndct_dice[seg]);
        for (const auto& v : summary.variants) log << ", " << fixed(mean_dice_for(summary.dice, v, seg));
        log << "\n";
    }
    log << std::flush;
    return summary;
}

GradmapSummary cmd_gradmaps(const Config& config, const fs::path& checkpoint, const std::string& case_selector,
                            std::ostream& log) {
    const LoadedDataset data = load_dataset(config);
    const RunLayout layout(config);
    auto denoiser = load_frozen(checkpoint);
    auto segmenter = load_frozen(layout.segmenter(config.representative));
    auto features = build_perceptual_net(derive_seed(config.training.seed, 0, kFeatureNetStream));

    GradmapSummary summary;
    const fs::path dir = layout.gradmap_dir();
    fs::create_directories(dir);
    for (const Case* c : select_cases(data.test, case_selector, config.gradmap_cases)) {
        for (const GradMap& g : gradient_maps(*denoiser, *segmenter, *features, *c)) {
            const fs::path image = dir / ("gradmap_" + std::string(loss_name(g.loss)) + "_" + c->id + ".pgm");
            write_pgm16(image, g.map);
            summary.outputs.push_back(image);
            summary.rows.push_back({loss_name(g.loss), c->id, g.roi_mass_fraction, c->mask.fraction()});
        }
    }
    std::sort(summary.rows.begin(), summary.rows.end(), [](const RoiMassRow& a, const RoiMassRow& b) {
        return std::tie(a.loss, a.case_id) < std::tie(b.loss, b.case_id);
    });
    summary.outputs.push_back(dir / "roi_mass.csv");
    write_roi_mass_csv(summary.outputs.back(), summary.rows);

    std::map<std::string, std::vector<double>> by_loss;
    std::vector<double> area;
    for (const auto& r : summary.rows) {
        by_loss[r.loss].push_back(r.roi_mass_fraction);
        if (r.loss == "task") area.push_back(r.roi_area_fraction);
    }
    log << "mean roi_mass_fraction over " << area.size() << " cases (roi area " << fixed(mean_of(area)) << "):";
    for (const auto& [loss, v] : by_loss) log << " " << loss << "=" << fixed(mean_of(v));
    log << "\n" << std::flush;
    return summary;
}

AcceptanceReport check_run(const Config& config, const EvaluationSummary& eval, const GradmapSummary& grad) {
    AcceptanceReport report;
    const std::string rep = segmenter_name(config.representative);
    auto has = [&](const std::string& v) {
        return std::find(eval.variants.begin(), eval.variants.end(), v) != eval.variants.end();
    };

    {
        AcceptanceCheck c{3, "LDCT degrades the representative segmenter by >= 5 Dice points", false, {}};
        const double ndct = eval.ndct_dice.count(rep) ? eval.ndct_dice.at(rep) : 0.0;
        const double ldct = mean_dice_for(eval.dice, "none", rep);
        c.passed = has("none") && ndct - ldct >= 0.05;
        c.detail = rep + " ndct=" + fixed(ndct) + " ldct=" + fixed(ldct) + " drop=" + fixed(100 * (ndct - ldct), 2) +
                   " points";
        report.checks.push_back(c);
    }
    {
        AcceptanceCheck c{4, "tod denoiser lifts downstream Dice and generalizes across segmenters", false, {}};
        const double none = mean_dice_for(eval.dice, "none", rep);
        const double tod = mean_dice_for(eval.dice, "tod", rep);
        std::size_t wins = 0;
        std::string per;
        for (SegmenterKind k : config.segmenters) {
            const std::string s = segmenter_name(k);
            const double a = mean_dice_for(eval.dice, "tod", s), b = mean_dice_for(eval.dice, "mse_only", s);
            wins += a >= b;
            per += " " + s + ":" + fixed(a) + (a >= b ? ">=" : "<") + fixed(b);
        }
        const std::size_t needed = std::min<std::size_t>(3, config.segmenters.size());
        c.passed = has("none") && has("tod") && has("mse_only") && tod - none >= 0.03 && wins >= needed;
        c.detail = rep + " tod=" + fixed(tod) + " none=" + fixed(none) + " gain=" + fixed(100 * (tod - none), 2) +
                   " points; tod>=mse_only on " + std::to_string(wins) + "/" +
                   std::to_string(config.segmenters.size()) + " (" + per.substr(per.empty() ? 0 : 1) + ")";
        report.checks.push_back(c);
    }
    {
        AcceptanceCheck c{5, "tod improves ROI RMSE over mse_only, more than whole-image RMSE", false, {}};
        const double tod_roi = mean_quality_for(eval.quality, "tod", "roi", &QualityRow::rmse);
        const double mse_roi = mean_quality_for(eval.quality, "mse_only", "roi", &QualityRow::rmse);
        const double tod_whole = mean_quality_for(eval.quality, "tod", "whole", &QualityRow::rmse);
        const double mse_whole = mean_quality_for(eval.quality, "mse_only", "whole", &QualityRow::rmse);
        const double roi_gain = mse_roi > 0 ? (mse_roi - tod_roi) / mse_roi : 0.0;
        const double whole_gain = mse_whole > 0 ? (mse_whole - tod_whole) / mse_whole : 0.0;
        c.passed = has("tod") && has("mse_only") && tod_roi <= mse_roi && roi_gain > whole_gain;
        c.detail = "roi rmse tod=" + fixed(tod_roi) + " mse_only=" + fixed(mse_roi) + " (gain " +
                   fixed(100 * roi_gain, 2) + "%); whole rmse tod=" + fixed(tod_whole) + " mse_only=" +
                   fixed(mse_whole) + " (gain " + fixed(100 * whole_gain, 2) + "%)";
        report.checks.push_back(c);
    }
    {
        AcceptanceCheck c{6, "task-loss gradient concentrates on the ROI", false, {}};
        std::vector<double> task, mse, area;
        for (const auto& r : grad.rows) {
            if (r.loss == "task") {
                task.push_back(r.roi_mass_fraction);
                area.push_back(r.roi_area_fraction);
            }
            if (r.loss == "mse") mse.push_back(r.roi_mass_fraction);
        }
        const double t = mean_of(task), m = mean_of(mse), a = mean_of(area);
        c.passed = task.size() >= 10 && t > m && t > a;
        c.detail = "cases=" + std::to_string(task.size()) + " roi_mass task=" + fixed(t) + " mse=" + fixed(m) +
                   " roi_area=" + fixed(a);
        report.checks.push_back(c);
    }
    return report;
}

AcceptanceReport cmd_reproduce(const Config& config, bool force, std::ostream& log) {
    const RunLayout layout(config);
    std::vector<Stage> stages;
    auto begin = [&](const std::string& name) {
        log << "== " << name << "\n" << std::flush;
        stages.push_back({name, utc_now(), "", {}});
    };
    auto end = [&] { stages.back().finished_at = utc_now(); };
    auto require_running = [] {
        if (stop_requested()) throw std::runtime_error("interrupted");
    };

    begin("gen-data");
    const DatasetSplit split = cmd_gen_data(config, force, log);
    stages.back().outputs.push_back(split.root / kManifestName);
    for (const auto* list : {&split.train, &split.val, &split.test}) {
        for (const auto& e : *list) {
            for (const auto& rel : {e.ndct, e.ldct, e.mask}) stages.back().outputs.push_back(split.root / rel);
        }
    }
    end();

    begin("pretrain-seg");
    for (const auto& s : cmd_pretrain_seg(config, config.segmenters, log)) {
        with_sidecar(stages.back().outputs, s.checkpoint);
        stages.back().outputs.push_back(layout.segmenter_log(s.kind));
    }
    stages.back().outputs.push_back(layout.segmenter_summary());
    end();

    for (LossVariant v : {LossVariant::tod, LossVariant::mse_only}) {
        require_running();
        const std::string name = variant_name(v);
        begin(std::string("train-denoiser ") + name);
        const DenoiserSummary d = cmd_train_denoiser(config, v, {}, log);
        if (d.interrupted) throw std::runtime_error("interrupted");
        for (const auto& p : {layout.denoiser(name), layout.denoiser_last(name), layout.denoiser_half(name)}) {
            with_sidecar(stages.back().outputs, p);
        }
        stages.back().outputs.push_back(layout.train_log(name));
        stages.back().outputs.push_back(layout.epoch_log(name));
        end();
    }

    begin("evaluate");
    const EvaluationSummary eval = cmd_evaluate(config, log);
    stages.back().outputs = eval.outputs;
    end();

    begin("gradmaps");
    const GradmapSummary grad = cmd_gradmaps(config, layout.denoiser_half("tod"), "all", log);
    stages.back().outputs = grad.outputs;
    end();

    const AcceptanceReport report = check_run(config, eval, grad);
    std::ostringstream text;
    for (const auto& c : report.checks) {
        text << "criterion " << c.id << ": " << (c.passed ? "PASS" : "FAIL") << "  " << c.name << "  [" << c.detail
             << "]\n";
    }
    log << text.str() << std::flush;
    const std::string body = text.str();
    write_file_atomic(layout.acceptance(), std::vector<std::uint8_t>(body.begin(), body.end()));

    nlohmann::json manifest;
    manifest["tool"] = "taskden";
    manifest["version"] = kVersion;
    manifest["config_hash"] = config.hash();
    manifest["config"] = config.to_text();
    manifest["stages"] = nlohmann::json::array();
    for (const auto& s : stages) manifest["stages"].push_back(stage_json(s, layout.root));
    manifest["acceptance"] = nlohmann::json::array();
    for (const auto& c : report.checks) {
        manifest["acceptance"].push_back({{"criterion", c.id}, {"passed", c.passed}, {"detail", c.detail}});
    }
    manifest["acceptance_file"] = {{"path", "acceptance.txt"}, {"sha256", file_sha256(layout.acceptance())}};
    const std::string json = manifest.dump(2) + "\n";
    write_file_atomic(layout.manifest(), std::vector<std::uint8_t>(json.begin(), json.end()));
    log << "run manifest: " << layout.manifest().string() << "\n";
    return report;
}

}  // namespace taskden

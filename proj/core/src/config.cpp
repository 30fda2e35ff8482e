#include "taskden/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "taskden/hash.hpp"

namespace taskden {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::size_t to_size(const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
    return out;
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("expected a number");
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("expected true or false");
}

std::vector<std::size_t> to_sizes(const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(to_size(item));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list of integers");
    return out;
}

RampWindow to_window(const std::string& v) {
    if (v == "ram_lak") return RampWindow::ram_lak;
    if (v == "shepp_logan") return RampWindow::shepp_logan;
    if (v == "hann") return RampWindow::hann;
    throw std::invalid_argument("expected ram_lak, shepp_logan or hann");
}

const char* window_text(RampWindow w) {
    switch (w) {
        case RampWindow::ram_lak: return "ram_lak";
        case RampWindow::shepp_logan: return "shepp_logan";
        case RampWindow::hann: return "hann";
    }
    return "?";
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

using Setter = std::function<void(Config&, const std::string&, const std::filesystem::path&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"data.output_dir", [](Config& c, const std::string& v, const auto& base) { c.data.output_dir = (base / v).lexically_normal(); }},
        {"data.size", [](Config& c, const std::string& v, const auto&) { c.data.size = to_size(v); }},
        {"data.n_train", [](Config& c, const std::string& v, const auto&) { c.data.n_train = to_size(v); }},
        {"data.n_val", [](Config& c, const std::string& v, const auto&) { c.data.n_val = to_size(v); }},
        {"data.n_test", [](Config& c, const std::string& v, const auto&) { c.data.n_test = to_size(v); }},
        {"data.seed", [](Config& c, const std::string& v, const auto&) { c.data.seed = to_size(v); }},
        {"data.photons_per_ray",
         [](Config& c, const std::string& v, const auto&) { c.data.simulator.photons_per_ray = to_double(v); }},
        {"data.angles", [](Config& c, const std::string& v, const auto&) { c.data.simulator.angles = to_size(v); }},
        {"data.bins", [](Config& c, const std::string& v, const auto&) { c.data.simulator.bins = to_size(v); }},
        {"data.mu_water", [](Config& c, const std::string& v, const auto&) { c.data.simulator.mu_water = to_double(v); }},
        {"data.window_low_hu",
         [](Config& c, const std::string& v, const auto&) { c.data.simulator.window_low_hu = to_double(v); }},
        {"data.window_high_hu",
         [](Config& c, const std::string& v, const auto&) { c.data.simulator.window_high_hu = to_double(v); }},
        {"data.fbp_window",
         [](Config& c, const std::string& v, const auto&) { c.data.simulator.fbp_window = to_window(v); }},

        {"networks.denoiser_channels",
         [](Config& c, const std::string& v, const auto&) { c.training.denoiser.channels = to_sizes(v); }},
        {"networks.denoiser_kernel",
         [](Config& c, const std::string& v, const auto&) { c.training.denoiser.kernel = to_size(v); }},
        {"networks.critic_channels",
         [](Config& c, const std::string& v, const auto&) { c.training.critic.channels = to_sizes(v); }},
        {"networks.segmenters",
         [](Config& c, const std::string& v, const auto&) {
             c.segmenters.clear();
             for (const auto& name : split_list(v)) c.segmenters.push_back(parse_segmenter_kind(name));
             if (c.segmenters.empty()) throw std::invalid_argument("expected at least one segmenter");
         }},
        {"networks.representative",
         [](Config& c, const std::string& v, const auto&) { c.representative = parse_segmenter_kind(v); }},

        {"segmenter_training.lr",
         [](Config& c, const std::string& v, const auto&) { c.segmenter_training.lr = to_double(v); }},
        {"segmenter_training.batch_size",
         [](Config& c, const std::string& v, const auto&) { c.segmenter_training.batch_size = to_size(v); }},
        {"segmenter_training.epochs",
         [](Config& c, const std::string& v, const auto&) { c.segmenter_training.epochs = to_size(v); }},
        {"segmenter_training.seed",
         [](Config& c, const std::string& v, const auto&) { c.segmenter_training.seed = to_size(v); }},
        {"segmenter_training.max_steps",
         [](Config& c, const std::string& v, const auto&) { c.segmenter_training.max_steps = to_size(v); }},

        {"training.lr", [](Config& c, const std::string& v, const auto&) { c.training.lr = to_double(v); }},
        {"training.batch_size", [](Config& c, const std::string& v, const auto&) { c.training.batch_size = to_size(v); }},
        {"training.epochs", [](Config& c, const std::string& v, const auto&) { c.training.epochs = to_size(v); }},
        {"training.lambda_mse",
         [](Config& c, const std::string& v, const auto&) { c.training.lambda_mse = to_double(v); }},
        {"training.clamp_eps", [](Config& c, const std::string& v, const auto&) { c.training.clamp_eps = to_double(v); }},
        {"training.critic_steps_per_gen_step",
         [](Config& c, const std::string& v, const auto&) { c.training.critic_steps_per_gen_step = to_size(v); }},
        {"training.seed", [](Config& c, const std::string& v, const auto&) { c.training.seed = to_size(v); }},
        {"training.use_gan", [](Config& c, const std::string& v, const auto&) { c.training.use_gan = to_bool(v); }},
        {"training.fidelity_reduction",
         [](Config& c, const std::string& v, const auto&) { c.training.fidelity_reduction = parse_reduction(v); }},
        {"training.checkpoint_metric",
         [](Config& c, const std::string& v, const auto&) { c.training.checkpoint_metric = parse_metric(v); }},
        {"training.max_steps", [](Config& c, const std::string& v, const auto&) { c.training.max_steps = to_size(v); }},

        {"evaluation.variants",
         [](Config& c, const std::string& v, const auto&) {
             c.eval_variants = split_list(v);
             for (const auto& name : c.eval_variants) {
                 if (name != "none") parse_variant(name);
             }
         }},
        {"evaluation.gradmap_cases",
         [](Config& c, const std::string& v, const auto&) { c.gradmap_cases = to_size(v); }},

        {"run.output_dir", [](Config& c, const std::string& v, const auto& base) { c.run_dir = (base / v).lexically_normal(); }},
    };
    return table;
}

}  // namespace

Config parse_config(const std::string& text, const std::filesystem::path& base_dir, const std::string& source) {
    Config config;
    config.data.output_dir = (base_dir / config.data.output_dir).lexically_normal();
    config.run_dir = (base_dir / config.run_dir).lexically_normal();
    std::stringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            static const char* kSections[] = {"data", "networks", "segmenter_training", "training", "evaluation", "run"};
            if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections)) {
                fail("unknown section '" + section + "'");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) fail("key '" + key + "' appears before any [section]");
        const std::string full = section + "." + key;
        const auto it = setters().find(full);
        if (it == setters().end()) fail("unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) fail("key '" + key + "' has no value");
        try {
            it->second(config, value, base_dir);
        } catch (const std::exception& e) {
            fail("key '" + key + "': " + e.what());
        }
    }
    try {
        config.training.validate();
        config.segmenter_training.validate();
    } catch (const std::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }
    if (config.data.size < 32 || config.data.size % 4 != 0) {
        throw ConfigError(source + ": data.size must be a multiple of 4 and at least 32");
    }
    if (std::find(config.segmenters.begin(), config.segmenters.end(), config.representative) ==
        config.segmenters.end()) {
        throw ConfigError(source + ": networks.representative must be one of networks.segmenters");
    }
    return config;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    return parse_config(ss.str(), base, path.string());
}

std::string Config::to_text() const {
    std::ostringstream os;
    const auto& sim = data.simulator;
    os << "[data]\noutput_dir = " << data.output_dir.generic_string() << "\nsize = " << data.size
       << "\nn_train = " << data.n_train << "\nn_val = " << data.n_val << "\nn_test = " << data.n_test
       << "\nseed = " << data.seed << "\nphotons_per_ray = " << number(sim.photons_per_ray)
       << "\nangles = " << sim.angles << "\nbins = " << sim.bins << "\nmu_water = " << number(sim.mu_water)
       << "\nwindow_low_hu = " << number(sim.window_low_hu) << "\nwindow_high_hu = " << number(sim.window_high_hu)
       << "\nfbp_window = " << window_text(sim.fbp_window) << "\n\n[networks]\ndenoiser_channels = "
       << join(training.denoiser.channels) << "\ndenoiser_kernel = " << training.denoiser.kernel
       << "\ncritic_channels = " << join(training.critic.channels) << "\nsegmenters = ";
    for (std::size_t i = 0; i < segmenters.size(); ++i) os << (i ? "," : "") << segmenter_name(segmenters[i]);
    os << "\nrepresentative = " << segmenter_name(representative) << "\n\n[segmenter_training]\nlr = "
       << number(segmenter_training.lr) << "\nbatch_size = " << segmenter_training.batch_size
       << "\nepochs = " << segmenter_training.epochs << "\nseed = " << segmenter_training.seed
       << "\nmax_steps = " << segmenter_training.max_steps << "\n\n[training]\nlr = " << number(training.lr)
       << "\nbatch_size = " << training.batch_size << "\nepochs = " << training.epochs
       << "\nlambda_mse = " << number(training.lambda_mse) << "\nclamp_eps = " << number(training.clamp_eps)
       << "\ncritic_steps_per_gen_step = " << training.critic_steps_per_gen_step << "\nseed = " << training.seed
       << "\nuse_gan = " << (training.use_gan ? "true" : "false")
       << "\nfidelity_reduction = " << reduction_name(training.fidelity_reduction)
       << "\ncheckpoint_metric = " << metric_name(training.checkpoint_metric)
       << "\nmax_steps = " << training.max_steps << "\n\n[evaluation]\nvariants = ";
    for (std::size_t i = 0; i < eval_variants.size(); ++i) os << (i ? "," : "") << eval_variants[i];
    os << "\ngradmap_cases = " << gradmap_cases << "\n\n[run]\noutput_dir = " << run_dir.generic_string() << "\n";
    return os.str();
}

std::string Config::hash() const { return sha256_hex(to_text()); }

}  // namespace taskden

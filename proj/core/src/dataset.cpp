#include "taskden/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "taskden/parallel.hpp"
#include "taskden/phantom.hpp"
#include "taskden/real.hpp"

namespace taskden {

namespace fs = std::filesystem;

Image simulate_ldct(const Image& ndct, const SimulatorConfig& sim, std::uint64_t seed) {
    const double width_hu = sim.window_high_hu - sim.window_low_hu;
    Image attenuation(ndct.height, ndct.width);
    for (std::size_t i = 0; i < ndct.size(); ++i) {
        const double v = ndct.pixels[i];
        const double hu = sim.window_low_hu + v * width_hu;
        attenuation.pixels[i] = v > 0.0 ? sim.mu_water * (1.0 + hu / 1000.0) : 0.0;
    }
    const std::size_t bins = sim.bins ? sim.bins : min_detector_bins(ndct.width);
    const Sinogram noisy = apply_dose_noise(radon(attenuation, sim.angles, bins), sim.photons_per_ray, seed);
    Image recon = fbp_reconstruct_unclamped(noisy, ndct.width, sim.fbp_window);
    for (double& mu : recon.pixels) {
        const double hu = 1000.0 * (mu / sim.mu_water - 1.0);
        mu = std::clamp((hu - sim.window_low_hu) / width_hu, 0.0, 1.0);
    }
    return recon;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw IoError("unknown split '" + s + "'");
}

double DatasetSplit::ratio(Split s) const {
    const std::size_t n = total();
    if (n == 0) return 0.0;
    const std::size_t k = s == Split::train ? train.size() : (s == Split::val ? val.size() : test.size());
    return static_cast<double>(k) / static_cast<double>(n);
}

void write_manifest(const fs::path& manifest, const DatasetSplit& split) {
    std::ostringstream os;
    for (const auto* list : {&split.train, &split.val, &split.test}) {
        for (const auto& e : *list) {
            os << e.case_id << '\t' << split_name(e.split) << '\t' << e.ndct.generic_string() << '\t'
               << e.ldct.generic_string() << '\t' << e.mask.generic_string() << '\n';
        }
    }
    const std::string text = os.str();
    std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + manifest.string());
    out << text;
}

DatasetSplit read_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("dataset manifest not found: " + manifest.string());
    DatasetSplit split;
    split.root = manifest.parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() != 5) {
            throw IoError(manifest.string() + ":" + std::to_string(line_no) + ": expected 5 tab-separated fields");
        }
        ManifestEntry e{fields[0], parse_split(fields[1]), fields[2], fields[3], fields[4]};
        (e.split == Split::train ? split.train : e.split == Split::val ? split.val : split.test).push_back(std::move(e));
    }
    return split;
}

DatasetSplit build_dataset(const DatasetConfig& config, bool force) {
    const fs::path manifest = config.output_dir / kManifestName;
    if (fs::exists(manifest) && !force) {
        throw IoError("dataset already exists at " + config.output_dir.string() + " (use --force to overwrite)");
    }
    std::error_code ec;
    for (const char* sub : {"ndct", "ldct", "mask"}) {
        fs::create_directories(config.output_dir / sub, ec);
        if (ec) throw IoError("cannot create " + (config.output_dir / sub).string() + ": " + ec.message());
    }

    const std::size_t total = config.n_train + config.n_val + config.n_test;
    std::vector<ManifestEntry> entries(total);
    parallel_for(total, [&](std::size_t i) {
        char id[32];
        std::snprintf(id, sizeof id, "case_%04zu", i);
        const Split split = i < config.n_train ? Split::train
                            : i < config.n_train + config.n_val ? Split::val
                                                                : Split::test;
        const Phantom phantom = generate_phantom(derive_seed(config.seed, i, 0), config.size);
        const Image ldct = simulate_ldct(phantom.ndct, config.simulator, derive_seed(config.seed, i, 1));
        ManifestEntry e{id, split, fs::path("ndct") / (std::string(id) + ".pgm"),
                        fs::path("ldct") / (std::string(id) + ".pgm"), fs::path("mask") / (std::string(id) + ".pgm")};
        write_pgm16(config.output_dir / e.ndct, phantom.ndct);
        write_pgm16(config.output_dir / e.ldct, ldct);
        write_mask_pgm16(config.output_dir / e.mask, phantom.organ_mask);
        entries[i] = std::move(e);
    });

    DatasetSplit split;
    split.root = config.output_dir;
    split.seed = config.seed;
    for (auto& e : entries) {
        (e.split == Split::train ? split.train : e.split == Split::val ? split.val : split.test).push_back(std::move(e));
    }
    write_manifest(manifest, split);
    return split;
}

LoadedDataset load_cases(const DatasetSplit& split) {
    auto load = [&](const std::vector<ManifestEntry>& entries) {
        std::vector<Case> cases;
        cases.reserve(entries.size());
        for (const auto& e : entries) {
            cases.push_back(Case{e.case_id, read_pgm16(split.root / e.ndct), read_pgm16(split.root / e.ldct),
                                 read_mask_pgm16(split.root / e.mask)});
        }
        return cases;
    };
    return LoadedDataset{load(split.train), load(split.val), load(split.test)};
}

}  // namespace taskden

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "taskden/ct.hpp"
#include "taskden/image.hpp"

namespace taskden {

/// Low-dose acquisition model. Image intensities are a display window
/// [window_low_hu, window_high_hu] mapped to [0, 1]; zero-valued pixels are
/// air. Attenuation per pixel is mu_water * (1 + HU / 1000).
struct SimulatorConfig {
    std::size_t angles = 180;
    std::size_t bins = 0;  // 0 selects min_detector_bins(size)
    double photons_per_ray = 1e4;
    double mu_water = 0.09;
    double window_low_hu = -200.0;
    double window_high_hu = 200.0;
    RampWindow fbp_window = RampWindow::shepp_logan;
};

/// Simulated low-dose reconstruction of a normal-dose slice, in [0, 1].
Image simulate_ldct(const Image& ndct, const SimulatorConfig& sim, std::uint64_t seed);

struct DatasetConfig {
    std::filesystem::path output_dir = "data";
    std::size_t size = 64;
    std::size_t n_train = 160;
    std::size_t n_val = 20;
    std::size_t n_test = 20;
    std::uint64_t seed = 1;
    SimulatorConfig simulator;
};

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
    std::string case_id;
    Split split = Split::train;
    std::filesystem::path ndct;  // relative to the manifest directory
    std::filesystem::path ldct;
    std::filesystem::path mask;
};

/// Disjoint train/val/test lists as recorded in a manifest.
struct DatasetSplit {
    std::filesystem::path root;  // directory holding manifest.tsv
    std::vector<ManifestEntry> train, val, test;
    std::uint64_t seed = 0;

    std::size_t total() const { return train.size() + val.size() + test.size(); }
    double ratio(Split s) const;
};

inline constexpr const char* kManifestName = "manifest.tsv";

/// Generates every case, writes ndct/ldct/mask PGMs and manifest.tsv (one
/// tab-separated line per case: case_id, split, ndct, ldct, mask). Refuses
/// to overwrite an existing manifest unless `force`. Case i uses phantom
/// seed derive_seed(seed, i, 0) and noise seed derive_seed(seed, i, 1), so
/// output does not depend on TOD_THREADS.
DatasetSplit build_dataset(const DatasetConfig& config, bool force = false);

DatasetSplit read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const DatasetSplit& split);

struct Case {
    std::string id;
    Image ndct;
    Image ldct;
    Mask mask;
};

struct LoadedDataset {
    std::vector<Case> train, val, test;
};

LoadedDataset load_cases(const DatasetSplit& split);

}  // namespace taskden

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support/test_util.hpp"
#include "taskden/checkpoint.hpp"
#include "taskden/config.hpp"
#include "taskden/hash.hpp"
#include "taskden/pipeline.hpp"

namespace taskden {
namespace {

Config tiny_config(const std::filesystem::path& root) {
    return parse_config(R"([data]
output_dir = run/data
size = 32
n_train = 8
n_val = 2
n_test = 10
seed = 2
angles = 60

[networks]
denoiser_channels = 4,1
critic_channels = 4,8,8
segmenters = unet_small,plain_cnn

[segmenter_training]
epochs = 1

[training]
epochs = 2

[evaluation]
variants = none,tod,mse_only,l1
gradmap_cases = 3

[run]
output_dir = run
)",
                        root);
}

std::size_t lines_in(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

class PipelineRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new testing::TempDir();
        config_ = new Config(tiny_config(dir_->path()));
        std::ostringstream log;
        report_ = new AcceptanceReport(cmd_reproduce(*config_, false, log));
        log_ = new std::string(log.str());
    }
    static void TearDownTestSuite() {
        delete report_;
        delete log_;
        delete config_;
        delete dir_;
    }
    static testing::TempDir* dir_;
    static Config* config_;
    static AcceptanceReport* report_;
    static std::string* log_;
};
testing::TempDir* PipelineRun::dir_ = nullptr;
Config* PipelineRun::config_ = nullptr;
AcceptanceReport* PipelineRun::report_ = nullptr;
std::string* PipelineRun::log_ = nullptr;

TEST_F(PipelineRun, ManifestCoversEveryStageWithChecksums) {
    const RunLayout layout(*config_);
    std::ifstream in(layout.manifest());
    const nlohmann::json m = nlohmann::json::parse(in);
    EXPECT_EQ(m["config_hash"], config_->hash());
    std::vector<std::string> names;
    for (const auto& s : m["stages"]) {
        names.push_back(s["name"]);
        EXPECT_FALSE(s["outputs"].empty()) << s["name"];
        for (const auto& o : s["outputs"]) {
            EXPECT_EQ(o["sha256"], file_sha256(layout.root / o["path"].get<std::string>())) << o["path"];
        }
        EXPECT_TRUE(s.contains("started_at"));
        EXPECT_TRUE(s.contains("finished_at"));
    }
    EXPECT_EQ(names, (std::vector<std::string>{"gen-data", "pretrain-seg", "train-denoiser tod",
                                               "train-denoiser mse_only", "evaluate", "gradmaps"}));
}

TEST_F(PipelineRun, AcceptanceReportListsDirectionalChecks) {
    std::vector<int> ids;
    for (const auto& c : report_->checks) ids.push_back(c.id);
    EXPECT_EQ(ids, (std::vector<int>{3, 4, 5, 6}));
    EXPECT_EQ(lines_in(RunLayout(*config_).acceptance()), 4u);
}

TEST_F(PipelineRun, EvaluationTablesHaveExpectedRows) {
    const RunLayout layout(*config_);
    // l1 was never trained: warned about and skipped
    EXPECT_NE(log_->find("warning: no checkpoint for variant l1"), std::string::npos);
    EXPECT_EQ(lines_in(layout.eval_dir() / "quality.csv"), 1u + 10 * 3 * 2);
    EXPECT_EQ(lines_in(layout.eval_dir() / "dice.csv"), 1u + 10 * 3 * 2);
    EXPECT_EQ(lines_in(layout.eval_dir() / "significance.csv"), 1u + 2 * 2);
    EXPECT_EQ(lines_in(layout.gradmap_dir() / "roi_mass.csv"), 1u + 4 * 3);
    std::size_t maps = 0;
    for (const auto& e : std::filesystem::directory_iterator(layout.gradmap_dir())) {
        maps += e.path().extension() == ".pgm" && e.path().filename().string().rfind("gradmap_", 0) == 0;
    }
    EXPECT_EQ(maps, 4u * 3);
}

TEST_F(PipelineRun, PretrainReportsLabeledDice) {
    EXPECT_NE(log_->find("unet_small ndct_test_dice="), std::string::npos);
    EXPECT_NE(log_->find("unet_small ldct_test_dice="), std::string::npos);
    EXPECT_NE(log_->find("plain_cnn ldct_test_dice="), std::string::npos);
}

TEST_F(PipelineRun, TrainingLogHasOneRowPerStep) {
    const RunLayout layout(*config_);
    EXPECT_EQ(lines_in(layout.train_log("tod")), 1u + 2 * 2);  // 8 cases, batch 4, 2 epochs
}

TEST_F(PipelineRun, EvaluateIsByteIdenticalOnRerun) {
    const RunLayout layout(*config_);
    std::vector<std::vector<std::uint8_t>> before;
    for (const char* f : {"quality.csv", "dice.csv", "significance.csv"}) before.push_back(read_file_bytes(layout.eval_dir() / f));
    std::ostringstream log;
    cmd_evaluate(*config_, log);
    std::size_t i = 0;
    for (const char* f : {"quality.csv", "dice.csv", "significance.csv"}) {
        EXPECT_EQ(read_file_bytes(layout.eval_dir() / f), before[i++]) << f;
    }
}

TEST_F(PipelineRun, GenDataRefusesWithoutForce) {
    std::ostringstream log;
    EXPECT_THROW(cmd_gen_data(*config_, false, log), IoError);
}

TEST_F(PipelineRun, GradmapsForSingleCase) {
    const RunLayout layout(*config_);
    const DatasetSplit split = read_manifest(config_->data.output_dir / kManifestName);
    std::ostringstream log;
    const GradmapSummary g = cmd_gradmaps(*config_, layout.denoiser_half("tod"), split.test[4].case_id, log);
    EXPECT_EQ(g.rows.size(), 4u);
    EXPECT_THROW(cmd_gradmaps(*config_, layout.denoiser_half("tod"), "nope", log), std::invalid_argument);
}

TEST(Pipeline, SeedOverrideChangesData) {
    testing::TempDir dir;
    Config a = tiny_config(dir / "a");
    Config b = tiny_config(dir / "b");
    b.data.seed = 3;
    std::ostringstream log;
    const auto sa = cmd_gen_data(a, false, log), sb = cmd_gen_data(b, false, log);
    EXPECT_NE(file_sha256(sa.root / sa.test[0].ldct), file_sha256(sb.root / sb.test[0].ldct));
}

TEST(Pipeline, StagesRequireTheirInputs) {
    testing::TempDir dir;
    const Config c = tiny_config(dir.path());
    std::ostringstream log;
    EXPECT_THROW(cmd_pretrain_seg(c, c.segmenters, log), IoError);
    cmd_gen_data(c, false, log);
    EXPECT_THROW(cmd_train_denoiser(c, LossVariant::tod, {}, log), IoError);
    EXPECT_THROW(cmd_gradmaps(c, dir / "missing.ckpt", "all", log), IoError);
}

}  // namespace
}  // namespace taskden

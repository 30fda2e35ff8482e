#include "taskden/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include "taskden/metrics.hpp"
#include "taskden/parallel.hpp"
#include "taskden/stats.hpp"
#include "taskden/training.hpp"

namespace taskden {

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << header << '\n';
    return out;
}

Image input_for(const VariantModel& v, const Case& c) { return v.denoiser ? denoise(*v.denoiser, c.ldct) : c.ldct; }

}  // namespace

std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8f", v);
    return buf;
}

std::vector<QualityRow> evaluate_quality(const std::vector<VariantModel>& variants, const std::vector<Case>& cases) {
    std::vector<QualityRow> rows(cases.size() * variants.size() * 2);
    parallel_for(cases.size(), [&](std::size_t ci) {
        const Case& c = cases[ci];
        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            const Image out = input_for(variants[vi], c);
            const std::size_t base = (ci * variants.size() + vi) * 2;
            rows[base] = {c.id, variants[vi].name, "roi", ssim(out, c.ndct, &c.mask), rmse(out, c.ndct, &c.mask),
                          psnr(out, c.ndct, &c.mask)};
            rows[base + 1] = {c.id, variants[vi].name, "whole", ssim(out, c.ndct), rmse(out, c.ndct),
                              psnr(out, c.ndct)};
        }
    });
    std::sort(rows.begin(), rows.end(), [](const QualityRow& a, const QualityRow& b) {
        return std::tie(a.case_id, a.variant, a.region) < std::tie(b.case_id, b.variant, b.region);
    });
    return rows;
}

std::vector<QualitySummaryRow> summarize_quality(const std::vector<QualityRow>& rows) {
    struct Acc {
        double ssim = 0, rmse = 0, psnr = 0;
        std::size_t n = 0, n_psnr = 0;
    };
    std::map<std::pair<std::string, std::string>, Acc> acc;
    for (const auto& r : rows) {
        Acc& a = acc[{r.variant, r.region}];
        a.ssim += r.ssim;
        a.rmse += r.rmse;
        ++a.n;
        if (std::isfinite(r.psnr)) {
            a.psnr += r.psnr;
            ++a.n_psnr;
        }
    }
    std::vector<QualitySummaryRow> out;
    for (const auto& [key, a] : acc) {
        out.push_back({key.first, key.second, a.ssim / a.n, a.rmse / a.n,
                       a.n_psnr ? a.psnr / a.n_psnr : std::numeric_limits<double>::infinity()});
    }
    return out;
}

double mean_quality_for(const std::vector<QualityRow>& rows, const std::string& variant, const std::string& region,
                        double QualityRow::*field) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.variant == variant && r.region == region) v.push_back(r.*field);
    }
    return mean_of(v);
}

DownstreamResult evaluate_downstream(const std::vector<VariantModel>& variants,
                                     const std::vector<SegmenterModel>& segmenters, const std::vector<Case>& cases) {
    DownstreamResult result;
    const std::size_t nv = variants.size(), ns = segmenters.size();
    result.dice.resize(cases.size() * nv * ns);
    parallel_for(cases.size(), [&](std::size_t ci) {
        const Case& c = cases[ci];
        for (std::size_t vi = 0; vi < nv; ++vi) {
            const Image input = input_for(variants[vi], c);
            for (std::size_t si = 0; si < ns; ++si) {
                result.dice[(ci * nv + vi) * ns + si] = {c.id, variants[vi].name, segmenter_name(segmenters[si].kind),
                                                         hard_dice(segment(*segmenters[si].net, input), c.mask)};
            }
        }
    });
    std::sort(result.dice.begin(), result.dice.end(), [](const DiceRow& a, const DiceRow& b) {
        return std::tie(a.case_id, a.variant, a.segmenter) < std::tie(b.case_id, b.variant, b.segmenter);
    });

    const bool has_tod = std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v.name == "tod"; });
    if (!has_tod) return result;
    auto per_case = [&](const std::string& variant, const std::string& seg) {
        std::vector<double> v;
        for (const auto& r : result.dice) {
            if (r.variant == variant && r.segmenter == seg) v.push_back(r.dice);
        }
        return v;
    };
    for (const auto& s : segmenters) {
        const std::string seg = segmenter_name(s.kind);
        for (const auto& v : variants) {
            if (v.name == "tod") continue;
            SignificanceRow row{"tod", v.name, seg, cases.size(), std::nullopt, std::nullopt};
            if (cases.size() >= kMinSignificanceCases) {
                const WilcoxonResult w = wilcoxon_signed_rank(per_case("tod", seg), per_case(v.name, seg));
                row.statistic = w.statistic;
                row.p_value = w.p_value;
            }
            result.significance.push_back(row);
        }
    }
    return result;
}

double mean_dice_for(const std::vector<DiceRow>& rows, const std::string& variant, const std::string& segmenter) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.variant == variant && r.segmenter == segmenter) v.push_back(r.dice);
    }
    return mean_of(v);
}

std::vector<GradMap> gradient_maps(Network& denoiser, Network& segmenter, Network& features, const Case& c) {
    if (!segmenter.frozen()) segmenter.freeze();
    if (!features.frozen()) features.freeze();
    const bool seg_mode = segmenter.training(), feat_mode = features.training();
    segmenter.set_training(false);
    features.set_training(false);
    const Tensor x_hat_value = image_to_tensor(infer(denoiser, c.ldct));
    const Tensor target = image_to_tensor(c.ndct);
    Tensor mask(x_hat_value.shape());
    for (std::size_t i = 0; i < c.mask.size(); ++i) mask.data()[i] = c.mask.values[i] ? Real(1) : Real(0);

    std::vector<GradMap> out;
    for (LossName name : kGradMapLosses) {
        Tensor x_hat = x_hat_value.detach().set_requires_grad(true);
        LossValue loss = name == LossName::task   ? task_oriented_loss(segmenter, x_hat, mask)
                         : name == LossName::mse  ? mse_loss(x_hat, target)
                         : name == LossName::l1   ? l1_loss(x_hat, target)
                                                  : perceptual_loss(features, x_hat, target);
        loss.value.backward();
        GradMap gm{name, Image(c.ndct.height, c.ndct.width), 0.0};
        double total = 0, roi = 0, peak = 0;
        if (x_hat.has_grad()) {
            const auto g = x_hat.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double a = std::fabs(static_cast<double>(g[i]));
                gm.map.pixels[i] = a;
                total += a;
                if (c.mask.values[i]) roi += a;
                peak = std::max(peak, a);
            }
        }
        if (peak > 0) {
            for (double& v : gm.map.pixels) v /= peak;
        }
        gm.roi_mass_fraction = total > 0 ? roi / total : 0.0;
        out.push_back(std::move(gm));
    }
    segmenter.set_training(seg_mode);
    features.set_training(feat_mode);
    return out;
}

void write_quality_csv(const std::filesystem::path& path, const std::vector<QualityRow>& rows) {
    auto out = open_csv(path, "case_id,variant,region,ssim,rmse,psnr");
    for (const auto& r : rows) {
        out << r.case_id << ',' << r.variant << ',' << r.region << ',' << format_number(r.ssim) << ','
            << format_number(r.rmse) << ',' << format_number(r.psnr) << '\n';
    }
}

void write_quality_summary_csv(const std::filesystem::path& path, const std::vector<QualitySummaryRow>& rows) {
    auto out = open_csv(path, "variant,region,ssim,rmse,psnr");
    for (const auto& r : rows) {
        out << r.variant << ',' << r.region << ',' << format_number(r.ssim) << ',' << format_number(r.rmse) << ','
            << format_number(r.psnr) << '\n';
    }
}

void write_dice_csv(const std::filesystem::path& path, const std::vector<DiceRow>& rows) {
    auto out = open_csv(path, "case_id,variant,segmenter,dice");
    for (const auto& r : rows) {
        out << r.case_id << ',' << r.variant << ',' << r.segmenter << ',' << format_number(r.dice) << '\n';
    }
}

void write_significance_csv(const std::filesystem::path& path, const std::vector<SignificanceRow>& rows) {
    auto out = open_csv(path, "variant_a,variant_b,segmenter,n,statistic,p_value");
    for (const auto& r : rows) {
        out << r.variant_a << ',' << r.variant_b << ',' << r.segmenter << ',' << r.n << ',';
        if (r.p_value) {
            out << format_number(*r.statistic) << ',' << format_number(*r.p_value) << '\n';
        } else {
            out << ",insufficient n\n";
        }
    }
}

void write_roi_mass_csv(const std::filesystem::path& path, const std::vector<RoiMassRow>& rows) {
    auto out = open_csv(path, "loss,case_id,roi_mass_fraction,roi_area_fraction");
    for (const auto& r : rows) {
        out << r.loss << ',' << r.case_id << ',' << format_number(r.roi_mass_fraction) << ','
            << format_number(r.roi_area_fraction) << '\n';
    }
}

}  // namespace taskden

#include "voxslam/renderer.hpp"

#include <cmath>

#include "voxslam/errors.hpp"

namespace voxslam {

namespace {

inline double sign0(double x) {
    return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
}

} // namespace

RayRender render_ray(const RaySampleData& ray, const RenderConfig& cfg) {
    const size_t n = ray.sdfs.size();
    RayRender out;
    out.weights.assign(n, 0.0);
    std::vector<double> w(n, 0.0);
    std::vector<bool> included(n, false);
    double wsum = 0.0;
    int n_included = 0;
    for (size_t j = 0; j < n; ++j) {
        bool in = true;
        if (ray.gt_depth) {
            in = classify_sample(ray.depths[j], *ray.gt_depth, cfg.truncation) !=
                 SampleClass::kBehind;
        }
        if (!in) {
            continue;
        }
        included[j] = true;
        w[j] = sdf_weight(ray.sdfs[j], cfg.truncation);
        wsum += w[j];
        ++n_included;
    }
    if (n_included == 0) {
        return out; // invalid
    }
    const double denom = wsum > cfg.eps_norm ? wsum : cfg.eps_norm;
    for (size_t j = 0; j < n; ++j) {
        if (!included[j]) {
            continue;
        }
        const double wn = w[j] / denom;
        out.weights[j] = wn;
        out.color += wn * ray.colors[j];
        out.depth += wn * ray.depths[j];
    }
    out.valid = true;
    return out;
}

LossDenominators count_denominators(std::span<const RayBatchInfo> rays) {
    LossDenominators d;
    for (const RayBatchInfo& r : rays) {
        if (r.count <= 0) {
            continue;
        }
        ++d.valid;
        if (r.gt_color) {
            ++d.rgb;
        }
        if (r.gt_depth) {
            ++d.depth;
        }
        bool any_fs = false, any_tr = false;
        for (SampleClass c : r.classes) {
            any_fs |= c == SampleClass::kFreeSpace;
            any_tr |= c == SampleClass::kTruncation;
        }
        d.fs += any_fs;
        d.sdf += any_tr;
    }
    return d;
}

RenderLossTerms render_loss_forward(const Eigen::MatrixXd& rgb, const Eigen::RowVectorXd& sdf,
                                    std::span<const double> depths,
                                    std::span<const RayBatchInfo> rays, const RenderConfig& cfg,
                                    const LossDenominators& denom) {
    RenderLossTerms terms;
    const double tr = cfg.truncation;
    for (const RayBatchInfo& r : rays) {
        if (r.count <= 0) {
            continue;
        }
        double wsum = 0.0;
        for (int j = 0; j < r.count; ++j) {
            wsum += sdf_weight(sdf[r.begin + j], tr);
        }
        const double d = wsum > cfg.eps_norm ? wsum : cfg.eps_norm;
        Vec3 color = Vec3::Zero();
        double depth = 0.0;
        double fs_sum = 0.0, sdf_sum = 0.0;
        int n_fs = 0, n_tr = 0;
        for (int j = 0; j < r.count; ++j) {
            const int col = r.begin + j;
            const double wn = sdf_weight(sdf[col], tr) / d;
            color += wn * rgb.col(col);
            depth += wn * depths[col];
            if (r.classes[j] == SampleClass::kFreeSpace) {
                const double e = sdf[col] - tr;
                fs_sum += e * e;
                ++n_fs;
            } else if (r.classes[j] == SampleClass::kTruncation) {
                const double e = sdf[col] - (*r.gt_depth - depths[col]);
                sdf_sum += e * e;
                ++n_tr;
            }
        }
        if (r.gt_color && denom.rgb > 0) {
            terms.rgb += (color - *r.gt_color).cwiseAbs().sum() / denom.rgb;
        }
        if (r.gt_depth && denom.depth > 0) {
            terms.depth += std::abs(depth - *r.gt_depth) / denom.depth;
        }
        if (n_fs > 0 && denom.fs > 0) {
            terms.fs += fs_sum / (n_fs * static_cast<double>(denom.fs));
        }
        if (n_tr > 0 && denom.sdf > 0) {
            terms.sdf += sdf_sum / (n_tr * static_cast<double>(denom.sdf));
        }
    }
    return terms;
}

void render_loss_backward(const Eigen::MatrixXd& rgb, const Eigen::RowVectorXd& sdf,
                          std::span<const double> depths, std::span<const RayBatchInfo> rays,
                          const RenderConfig& cfg, const LossDenominators& denom,
                          double total_grad, Eigen::MatrixXd& rgb_grad,
                          Eigen::RowVectorXd& sdf_grad) {
    const double tr = cfg.truncation;
    std::vector<double> w, wn, dwn;
    for (const RayBatchInfo& r : rays) {
        if (r.count <= 0) {
            continue;
        }
        w.assign(r.count, 0.0);
        wn.assign(r.count, 0.0);
        dwn.assign(r.count, 0.0);
        double wsum = 0.0;
        for (int j = 0; j < r.count; ++j) {
            w[j] = sdf_weight(sdf[r.begin + j], tr);
            wsum += w[j];
        }
        const bool floored = !(wsum > cfg.eps_norm);
        const double d = floored ? cfg.eps_norm : wsum;
        Vec3 color = Vec3::Zero();
        double depth = 0.0;
        int n_fs = 0, n_tr = 0;
        for (int j = 0; j < r.count; ++j) {
            wn[j] = w[j] / d;
            color += wn[j] * rgb.col(r.begin + j);
            depth += wn[j] * depths[r.begin + j];
            n_fs += r.classes[j] == SampleClass::kFreeSpace;
            n_tr += r.classes[j] == SampleClass::kTruncation;
        }

        Vec3 dC = Vec3::Zero();
        double dD = 0.0;
        if (r.gt_color && denom.rgb > 0) {
            const Vec3 diff = color - *r.gt_color;
            dC = total_grad * cfg.lambda_rgb / denom.rgb *
                 Vec3(sign0(diff.x()), sign0(diff.y()), sign0(diff.z()));
        }
        if (r.gt_depth && denom.depth > 0) {
            dD = total_grad * cfg.lambda_depth / denom.depth * sign0(depth - *r.gt_depth);
        }

        // color / depth path through the normalized weights
        double dot = 0.0;
        for (int j = 0; j < r.count; ++j) {
            const int col = r.begin + j;
            rgb_grad.col(col) += wn[j] * dC;
            dwn[j] = dC.dot(rgb.col(col)) + dD * depths[col];
            dot += dwn[j] * wn[j];
        }
        for (int j = 0; j < r.count; ++j) {
            const int col = r.begin + j;
            const double dw = floored ? dwn[j] / d : (dwn[j] - dot) / d;
            const double sig = 1.0 / (1.0 + std::exp(-sdf[col] / tr));
            const double dw_ds = w[j] * (1.0 - 2.0 * sig) / tr;
            double ds = dw * dw_ds;
            if (r.classes[j] == SampleClass::kFreeSpace && denom.fs > 0) {
                ds += total_grad * cfg.lambda_fs * 2.0 * (sdf[col] - tr) /
                      (n_fs * static_cast<double>(denom.fs));
            } else if (r.classes[j] == SampleClass::kTruncation && denom.sdf > 0) {
                ds += total_grad * cfg.lambda_sdf * 2.0 *
                      (sdf[col] - (*r.gt_depth - depths[col])) /
                      (n_tr * static_cast<double>(denom.sdf));
            }
            sdf_grad[col] += ds;
        }
    }
}

LossValues compute_losses(std::span<const RaySampleData> rays, const RenderConfig& cfg) {
    if (rays.empty()) {
        throw EmptyBatchError("compute_losses: empty batch");
    }
    // Convert to the flattened form so the pure and tape paths share one
    // implementation.
    int64_t total = 0;
    for (const RaySampleData& r : rays) {
        total += static_cast<int64_t>(r.sdfs.size());
    }
    Eigen::MatrixXd rgb(3, total);
    Eigen::RowVectorXd sdf(total);
    std::vector<double> depths;
    depths.reserve(total);
    std::vector<RayBatchInfo> infos;
    infos.reserve(rays.size());
    int cursor = 0;
    for (const RaySampleData& r : rays) {
        RayBatchInfo info;
        info.begin = cursor;
        info.gt_color = r.gt_color;
        info.gt_depth = r.gt_depth;
        for (size_t j = 0; j < r.sdfs.size(); ++j) {
            SampleClass c = SampleClass::kUnclassified;
            if (r.gt_depth) {
                c = classify_sample(r.depths[j], *r.gt_depth, cfg.truncation);
                if (c == SampleClass::kBehind) {
                    continue;
                }
            }
            rgb.col(cursor) = r.colors[j];
            sdf[cursor] = r.sdfs[j];
            depths.push_back(r.depths[j]);
            info.classes.push_back(c);
            ++cursor;
        }
        info.count = cursor - info.begin;
        infos.push_back(std::move(info));
    }
    const LossDenominators denom = count_denominators(infos);
    if (denom.valid == 0) {
        throw EmptyBatchError("compute_losses: no valid rays in batch");
    }
    const RenderLossTerms terms = render_loss_forward(
        rgb.leftCols(cursor), sdf.head(cursor), std::span<const double>(depths), infos, cfg,
        denom);
    LossValues out;
    out.rgb = terms.rgb;
    out.depth = terms.depth;
    out.fs = terms.fs;
    out.sdf = terms.sdf;
    out.total = terms.total(cfg);
    return out;
}

} // namespace voxslam

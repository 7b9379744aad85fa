// Copyright 2026 The depthgan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reconstruction metrics: pixel-wise (MSE, vectorial error) and
// distribution distances between binned histograms of ground truth and
// generated values (Jensen-Shannon, Kullback-Leibler, Wasserstein-1,
// histogram intersection, histogram correlation).

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "depthgan/errors.hpp"
#include "depthgan/image.hpp"
#include "depthgan/normals.hpp"

namespace depthgan::metrics {

inline constexpr double kSmoothingEps = 1e-12;

enum class LogBase { e, two };

struct Histogram {
    std::vector<double> edges;  // B+1, strictly ascending
    std::vector<double> mass;   // B, sums to 1 when count > 0
    std::size_t count = 0;

    std::size_t bins() const { return mass.size(); }
};

/// Uniform bins on [lo, hi]; out-of-range values go to the end bins.
inline Histogram histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
    if (bins == 0) throw DomainError("histogram: need at least one bin");
    if (!(lo < hi)) throw DomainError("histogram: range must satisfy lo < hi");
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.mass.assign(bins, 0.0);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
        const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
        long b = static_cast<long>(std::floor(t));
        b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    h.count = values.size();
    if (h.count > 0)
        for (std::size_t i = 0; i < bins; ++i)
            h.mass[i] = static_cast<double>(counts[i]) / static_cast<double>(h.count);
    return h;
}

inline void require_same_edges(const Histogram& p, const Histogram& q, const char* op) {
    if (p.edges != q.edges) throw ContractError(std::string(op) + ": histograms have different bin edges");
}

namespace detail {

inline std::vector<double> smoothed(const std::vector<double>& m) {
    std::vector<double> s(m.size());
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) total += s[i] = m[i] + kSmoothingEps;
    for (double& v : s) v /= total;
    return s;
}

inline double kl_raw(const std::vector<double>& p, const std::vector<double>& q) {
    const auto ps = smoothed(p), qs = smoothed(q);
    double d = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) d += ps[i] * std::log(ps[i] / qs[i]);
    return std::max(d, 0.0);
}

inline double log_scale(LogBase base) { return base == LogBase::e ? 1.0 : 1.0 / std::numbers::ln2; }

}  // namespace detail

/// sum p ln(p/q) on eps-smoothed, renormalized masses.
inline double kl_divergence(const Histogram& p, const Histogram& q, LogBase base = LogBase::e) {
    require_same_edges(p, q, "kl_divergence");
    return detail::kl_raw(p.mass, q.mass) * detail::log_scale(base);
}

inline double js_divergence(const Histogram& p, const Histogram& q, LogBase base = LogBase::e) {
    require_same_edges(p, q, "js_divergence");
    std::vector<double> m(p.mass.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (p.mass[i] + q.mass[i]);
    return 0.5 * (detail::kl_raw(p.mass, m) + detail::kl_raw(q.mass, m)) * detail::log_scale(base);
}

/// W1 between the binned distributions: sum |CDF_p - CDF_q| * bin width.
inline double wasserstein_1d(const Histogram& p, const Histogram& q) {
    require_same_edges(p, q, "wasserstein_1d");
    double cp = 0.0, cq = 0.0, w = 0.0;
    for (std::size_t i = 0; i + 1 < p.bins(); ++i) {
        cp += p.mass[i];
        cq += q.mass[i];
        w += std::abs(cp - cq) * (p.edges[i + 1] - p.edges[i]);
    }
    return w;
}

inline double hist_intersection(const Histogram& p, const Histogram& q) {
    require_same_edges(p, q, "hist_intersection");
    double s = 0.0;
    for (std::size_t i = 0; i < p.bins(); ++i) s += std::min(p.mass[i], q.mass[i]);
    return s;
}

/// Pearson correlation of the mass vectors. Throws DomainError when either has zero variance.
inline double hist_correlation(const Histogram& p, const Histogram& q) {
    require_same_edges(p, q, "hist_correlation");
    const double n = static_cast<double>(p.bins());
    double mp = 0.0, mq = 0.0;
    for (std::size_t i = 0; i < p.bins(); ++i) {
        mp += p.mass[i];
        mq += q.mass[i];
    }
    mp /= n;
    mq /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < p.bins(); ++i) {
        const double a = p.mass[i] - mp, b = q.mass[i] - mq;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) throw DomainError("hist_correlation: zero variance, correlation undefined");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Region pixels used by the pixel-wise metrics.
inline std::vector<std::size_t> region_pixels(const HoleMask& region, std::size_t h, std::size_t w) {
    if (region.height != h || region.width != w) throw DimensionError("metrics: region size differs from image");
    std::vector<std::size_t> px;
    for (std::size_t i = 0; i < region.hole.size(); ++i)
        if (region.hole[i]) px.push_back(i);
    if (px.empty()) throw DomainError("metrics: empty region");
    return px;
}

inline double mse(const DisparityImage& x, const DisparityImage& y, const HoleMask& region) {
    if (x.height != y.height || x.width != y.width) throw DimensionError("mse: image sizes differ");
    double s = 0.0;
    const auto px = region_pixels(region, x.height, x.width);
    for (std::size_t i : px) s += (x.values[i] - y.values[i]) * (x.values[i] - y.values[i]);
    return s / static_cast<double>(px.size());
}

/// Mean over region pixels of sum_c |x_c - y_c|.
inline double vectorial_error(const NormalMap& x, const NormalMap& y, const HoleMask& region) {
    if (x.height != y.height || x.width != y.width) throw DimensionError("vectorial_error: map sizes differ");
    const auto px = region_pixels(region, x.height, x.width);
    const std::size_t plane = x.height * x.width;
    double s = 0.0;
    for (std::size_t i : px)
        for (std::size_t c = 0; c < 3; ++c) s += std::abs(x.vectors[c * plane + i] - y.vectors[c * plane + i]);
    return s / static_cast<double>(px.size());
}

struct DistancePair {
    double depth = 0.0;
    double surface = 0.0;
};

struct CorrelationPair {
    std::optional<double> depth;
    std::optional<double> surface;
};

struct MetricReport {
    double mse = 0.0;
    double ve = 0.0;
    DistancePair js, kl, wasserstein, intersection;
    CorrelationPair correlation;
};

enum class SurfaceSampling { pooled, per_component };

struct EvalOptions {
    std::size_t depth_bins = 256;
    std::size_t normal_bins = 64;
    std::optional<std::pair<double, double>> depth_range;  // default: gt min/max over the region
    LogBase log_base = LogBase::e;
    SurfaceSampling surface = SurfaceSampling::pooled;
};

namespace detail {

struct Distances {
    double js, kl, w1, hi;
    std::optional<double> hc;
};

inline Distances distances(const Histogram& p, const Histogram& q, LogBase base) {
    Distances d{js_divergence(p, q, base), kl_divergence(p, q, base), wasserstein_1d(p, q), hist_intersection(p, q),
                std::nullopt};
    try {
        d.hc = hist_correlation(p, q);
    } catch (const DomainError&) {
    }
    return d;
}

}  // namespace detail

/// All metrics between ground truth and generated disparity on `region`.
/// KL is taken as KL(gt || gen). Invalid ground-truth pixels are skipped.
inline MetricReport evaluate_pair(const DisparityImage& gt, const DisparityImage& gen, const HoleMask& region,
                                  const EvalOptions& opt = {}) {
    if (gt.height != gen.height || gt.width != gen.width) throw DimensionError("evaluate_pair: image sizes differ");
    HoleMask used = region;
    for (std::size_t i = 0; i < used.hole.size(); ++i)
        if (!gt.valid[i]) used.hole[i] = 0;
    const auto px = region_pixels(used, gt.height, gt.width);

    const NormalMap ng = normals_from_disparity(gt), nf = normals_from_disparity(gen);
    MetricReport r;
    r.mse = mse(gt, gen, used);
    r.ve = vectorial_error(ng, nf, used);

    std::vector<double> dg, df;
    for (std::size_t i : px) {
        dg.push_back(gt.values[i]);
        df.push_back(gen.values[i]);
    }
    double lo, hi;
    if (opt.depth_range) {
        std::tie(lo, hi) = *opt.depth_range;
    } else {
        lo = *std::min_element(dg.begin(), dg.end());
        hi = *std::max_element(dg.begin(), dg.end());
        if (!(lo < hi)) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
    const auto dd = detail::distances(histogram(dg, opt.depth_bins, lo, hi), histogram(df, opt.depth_bins, lo, hi),
                                      opt.log_base);

    const std::size_t plane = gt.height * gt.width;
    detail::Distances sd{};
    if (opt.surface == SurfaceSampling::pooled) {
        std::vector<double> sg, sf;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i : px) {
                sg.push_back(ng.vectors[c * plane + i]);
                sf.push_back(nf.vectors[c * plane + i]);
            }
        sd = detail::distances(histogram(sg, opt.normal_bins, -1.0, 1.0), histogram(sf, opt.normal_bins, -1.0, 1.0),
                               opt.log_base);
    } else {
        double hc_sum = 0.0;
        int hc_n = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<double> sg, sf;
            for (std::size_t i : px) {
                sg.push_back(ng.vectors[c * plane + i]);
                sf.push_back(nf.vectors[c * plane + i]);
            }
            const auto one = detail::distances(histogram(sg, opt.normal_bins, -1.0, 1.0),
                                               histogram(sf, opt.normal_bins, -1.0, 1.0), opt.log_base);
            sd.js += one.js / 3.0;
            sd.kl += one.kl / 3.0;
            sd.w1 += one.w1 / 3.0;
            sd.hi += one.hi / 3.0;
            if (one.hc) {
                hc_sum += *one.hc;
                ++hc_n;
            }
        }
        if (hc_n) sd.hc = hc_sum / hc_n;
    }
    r.js = {dd.js, sd.js};
    r.kl = {dd.kl, sd.kl};
    r.wasserstein = {dd.w1, sd.w1};
    r.intersection = {dd.hi, sd.hi};
    r.correlation = {dd.hc, sd.hc};
    return r;
}

/// Per-image mean; undefined correlations are left out of their average.
inline MetricReport mean_report(const std::vector<MetricReport>& rs) {
    if (rs.empty()) throw DomainError("mean_report: no reports");
    MetricReport m;
    const double n = static_cast<double>(rs.size());
    double cd = 0.0, cs = 0.0;
    int nd = 0, ns = 0;
    for (const auto& r : rs) {
        m.mse += r.mse / n;
        m.ve += r.ve / n;
        for (auto [dst, src] : {std::pair{&m.js, &r.js}, std::pair{&m.kl, &r.kl}, std::pair{&m.wasserstein, &r.wasserstein},
                                std::pair{&m.intersection, &r.intersection}}) {
            dst->depth += src->depth / n;
            dst->surface += src->surface / n;
        }
        if (r.correlation.depth) cd += *r.correlation.depth, ++nd;
        if (r.correlation.surface) cs += *r.correlation.surface, ++ns;
    }
    if (nd) m.correlation.depth = cd / nd;
    if (ns) m.correlation.surface = cs / ns;
    return m;
}

// ---------------------------------------------------------------------------
// report tables

struct ReportRow {
    std::string label;
    MetricReport report;
};

namespace detail {

inline std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

inline std::string fmt(const std::optional<double>& v, int precision = 6) {
    return v ? fmt(*v, precision) : std::string("undefined");
}

inline std::vector<std::string> distance_cells(const MetricReport& r) {
    return {fmt(r.js.depth),           fmt(r.js.surface),          fmt(r.kl.depth),
            fmt(r.kl.surface),         fmt(r.wasserstein.depth),   fmt(r.wasserstein.surface),
            fmt(r.intersection.depth), fmt(r.intersection.surface), fmt(r.correlation.depth),
            fmt(r.correlation.surface)};
}

}  // namespace detail

/// Pixel-error table: label, MSE, VE.
inline std::string pixel_table_csv(const std::vector<ReportRow>& rows, const std::string& header_comment = {}) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "label,mse,ve\n";
    for (const auto& row : rows) os << row.label << ',' << detail::fmt(row.report.mse) << ',' << detail::fmt(row.report.ve) << "\n";
    return os.str();
}

inline std::string pixel_table_markdown(const std::vector<ReportRow>& rows, const std::string& header_comment = {}) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "<!-- " << header_comment << " -->\n";
    os << "| | MSE | VE |\n|---|---|---|\n";
    for (const auto& row : rows)
        os << "| " << row.label << " | " << detail::fmt(row.report.mse) << " | " << detail::fmt(row.report.ve) << " |\n";
    return os.str();
}

inline const std::vector<std::string>& distance_names() {
    static const std::vector<std::string> names{"Jensen-Shannon", "Kullback-Leibler", "Wasserstein",
                                                "Hist. Intersection", "Hist. Correlation"};
    return names;
}

/// Distribution table: five metrics x {Depth, Surface}.
inline std::string distance_table_csv(const std::vector<ReportRow>& rows, const std::string& header_comment = {}) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "label,js_depth,js_surface,kl_depth,kl_surface,wasserstein_depth,wasserstein_surface,"
          "intersection_depth,intersection_surface,correlation_depth,correlation_surface\n";
    for (const auto& row : rows) {
        os << row.label;
        for (const auto& c : detail::distance_cells(row.report)) os << ',' << c;
        os << "\n";
    }
    return os.str();
}

inline std::string distance_table_markdown(const std::vector<ReportRow>& rows, const std::string& header_comment = {}) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "<!-- " << header_comment << " -->\n";
    os << "| |";
    for (const auto& n : distance_names()) os << ' ' << n << " Depth | " << n << " Surface |";
    os << "\n|---|";
    for (std::size_t i = 0; i < 2 * distance_names().size(); ++i) os << "---|";
    os << "\n";
    for (const auto& row : rows) {
        os << "| " << row.label << " |";
        for (const auto& c : detail::distance_cells(row.report)) os << ' ' << c << " |";
        os << "\n";
    }
    return os.str();
}

}  // namespace depthgan::metrics

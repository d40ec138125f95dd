#include "wxgen/qq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

#include "wxgen/error.hpp"
#include "wxgen/ioutil.hpp"

namespace wxgen {

void QQCurve::validate() const {
    if (probs.size() != q_a.size() || probs.size() != q_b.size())
        throw ValidationError("qq curve arrays disagree in length");
    if (probs.empty()) throw ValidationError("qq curve is empty");
    for (size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0 && probs[i] < 1.0))
            throw ValidationError("qq curve probs must lie inside (0,1)");
        if (i > 0 && !(probs[i] > probs[i - 1]))
            throw ValidationError("qq curve probs must be strictly increasing");
        if (i > 0 && (q_a[i] < q_a[i - 1] || q_b[i] < q_b[i - 1]))
            throw ValidationError("qq curve quantiles must be non-decreasing");
    }
}

std::vector<double> default_probs(size_t n_probs) {
    if (n_probs == 0) throw ValidationError("need at least one probability");
    std::vector<double> probs(n_probs);
    for (size_t i = 0; i < n_probs; ++i)
        probs[i] = static_cast<double>(i + 1) / static_cast<double>(n_probs + 1);
    return probs;
}

std::vector<double> quantiles(std::span<const float> values, std::span<const double> probs) {
    if (values.empty()) throw ValidationError("cannot take quantiles of an empty set");
    std::vector<float> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();

    std::vector<double> out(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError("quantile prob must lie in [0,1], got " + format_double(p));
        const double h = static_cast<double>(n - 1) * p;
        const size_t lo = static_cast<size_t>(h);
        const size_t hi = std::min(lo + 1, n - 1);
        const double a = sorted[lo], b = sorted[hi];
        double q = a + (h - static_cast<double>(lo)) * (b - a);
        out[i] = std::clamp(q, a, b);  // keep interpolation inside its bracket
    }
    return out;
}

QQCurve qq_curve(const CubeDataset& a, const CubeDataset& b, size_t n_probs) {
    if (a.count == 0 || b.count == 0) throw ValidationError("qq comparison needs non-empty sets");
    if (a.normalized != b.normalized)
        throw ValidationError("qq comparison unit flags differ: one side is normalized, "
                              "the other physical");
    QQCurve curve;
    curve.probs = default_probs(n_probs);
    curve.q_a = quantiles(a.values, curve.probs);
    curve.q_b = quantiles(b.values, curve.probs);
    return curve;
}

void ExtremeRefSpec::validate() const {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("extreme-set fraction must lie strictly between 0 and 1, got " +
                              format_double(fraction));
}

CubeDataset reference_extremes(const CubeDataset& ds, const ExtremeRefSpec& spec) {
    spec.validate();
    ds.validate();
    if (ds.count == 0) throw ValidationError("cannot rank an empty dataset");

    const std::vector<double> means = cube_means(ds);
    std::vector<size_t> order(ds.count);
    std::iota(order.begin(), order.end(), 0);
    if (spec.direction == ExtremeDirection::top)
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t i, size_t j) { return means[i] > means[j]; });
    else
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t i, size_t j) { return means[i] < means[j]; });

    // ceil(fraction*n), robust to the product landing a hair above an integer
    const double raw = spec.fraction * static_cast<double>(ds.count);
    const size_t m = static_cast<size_t>(std::ceil(raw - 1e-9));
    std::vector<size_t> keep(order.begin(), order.begin() + m);
    std::sort(keep.begin(), keep.end());  // original cube order in the output

    CubeDataset out;
    out.count = static_cast<uint32_t>(m);
    out.t = ds.t;
    out.h = ds.h;
    out.w = ds.w;
    out.normalized = ds.normalized;
    out.stats = ds.stats;
    out.values.reserve(m * ds.cube_size());
    for (size_t idx : keep) {
        auto c = ds.cube(idx);
        out.values.insert(out.values.end(), c.begin(), c.end());
    }
    return out;
}

double qq_divergence(const QQCurve& curve, double upto_prob) {
    curve.validate();
    if (!(upto_prob > 0.0 && upto_prob <= 1.0))
        throw ValidationError("upto_prob must lie in (0,1], got " + format_double(upto_prob));
    double d = 0.0;
    for (size_t i = 0; i < curve.probs.size(); ++i) {
        if (curve.probs[i] > upto_prob) break;
        d = std::max(d, std::fabs(curve.q_a[i] - curve.q_b[i]));
    }
    return d;
}

double prob_reaching(const CubeDataset& ds, double value) {
    if (ds.count == 0) throw ValidationError("cannot take probs of an empty set");
    size_t below = 0;
    for (float v : ds.values)
        if (static_cast<double>(v) <= value) ++below;
    return static_cast<double>(below) / static_cast<double>(ds.values.size());
}

namespace {

std::string svg_text(const QQCurve& curve) {
    // Square canvas, both axes in data units over the same range: the identity
    // reference is then the corner-to-corner diagonal.
    double lo = 0.0, hi = 0.0;
    for (size_t i = 0; i < curve.probs.size(); ++i) {
        lo = std::min({lo, curve.q_a[i], curve.q_b[i]});
        hi = std::max({hi, curve.q_a[i], curve.q_b[i]});
    }
    if (hi <= lo) hi = lo + 1.0;
    const double size = 400.0, pad = 40.0;
    auto sx = [&](double v) { return pad + (v - lo) / (hi - lo) * (size - 2 * pad); };
    auto sy = [&](double v) { return size - pad - (v - lo) / (hi - lo) * (size - 2 * pad); };
    char buf[160];
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" "
         "viewBox=\"0 0 400 400\">\n";
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
                  sx(lo), sy(lo), sx(hi), sy(hi));
    s += buf;
    for (size_t i = 0; i < curve.probs.size(); ++i) {
        std::snprintf(buf, sizeof buf,
                      "  <circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"#1f6fb2\"/>\n",
                      sx(curve.q_a[i]), sy(curve.q_b[i]));
        s += buf;
    }
    s += "</svg>\n";
    return s;
}

}  // namespace

void emit_qq(const QQCurve& curve, const std::filesystem::path& csv_path,
             const std::optional<std::filesystem::path>& svg_path) {
    curve.validate();
    std::string csv = "prob,quantile_a,quantile_b\n";
    for (size_t i = 0; i < curve.probs.size(); ++i)
        csv += format_double(curve.probs[i]) + "," + format_double(curve.q_a[i]) + "," +
               format_double(curve.q_b[i]) + "\n";
    write_file_atomic(csv_path, csv);
    if (svg_path) write_file_atomic(*svg_path, svg_text(curve));
}

QQCurve load_qq_csv(const std::filesystem::path& csv_path) {
    const std::vector<std::byte> bytes = read_file_bytes(csv_path);
    const std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    QQCurve curve;
    size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        if (header) {
            if (line != "prob,quantile_a,quantile_b")
                throw IoError(csv_path.string() + ": not a qq csv (bad header '" + line + "')");
            header = false;
            continue;
        }
        double vals[3];
        size_t field = 0, fpos = 0;
        while (field < 3) {
            size_t comma = line.find(',', fpos);
            const std::string cell =
                line.substr(fpos, comma == std::string::npos ? std::string::npos : comma - fpos);
            char* cend = nullptr;
            vals[field] = std::strtod(cell.c_str(), &cend);
            if (cell.empty() || cend != cell.c_str() + cell.size())
                throw IoError(csv_path.string() + ": malformed qq csv row '" + line + "'");
            ++field;
            if (comma == std::string::npos) break;
            fpos = comma + 1;
        }
        if (field != 3)
            throw IoError(csv_path.string() + ": malformed qq csv row '" + line + "'");
        curve.probs.push_back(vals[0]);
        curve.q_a.push_back(vals[1]);
        curve.q_b.push_back(vals[2]);
    }
    if (header) throw IoError(csv_path.string() + ": empty qq csv");
    curve.validate();
    return curve;
}

}  // namespace wxgen

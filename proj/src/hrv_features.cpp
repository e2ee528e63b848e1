#include "caal/hrv_features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "caal/csv.hpp"
#include "caal/errors.hpp"

namespace caal {

namespace {

double mean_of(std::span<const double> xs) {
    double sum = 0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

// Population standard deviation (divides by n).
double pop_sd(std::span<const double> xs, double mean) {
    double acc = 0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

double median_inplace(std::vector<double>& xs) {
    const std::size_t n = xs.size();
    auto mid = xs.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(xs.begin(), mid, xs.end());
    double upper = *mid;
    if (n % 2 == 1) return upper;
    double lower = *std::max_element(xs.begin(), mid);
    return 0.5 * (lower + upper);
}

}  // namespace

std::array<double, kFeatureCount> FeatureVector::to_array() const {
    return {bpm, ibi, sdnn, sdsd, rmssd, pnn20, pnn50, mad, sd1, sd2, s_area, sd_ratio, br};
}

FeatureVector FeatureVector::from_array(const std::array<double, kFeatureCount>& v) {
    FeatureVector f;
    f.bpm = v[0];
    f.ibi = v[1];
    f.sdnn = v[2];
    f.sdsd = v[3];
    f.rmssd = v[4];
    f.pnn20 = v[5];
    f.pnn50 = v[6];
    f.mad = v[7];
    f.sd1 = v[8];
    f.sd2 = v[9];
    f.s_area = v[10];
    f.sd_ratio = v[11];
    f.br = v[12];
    f.br_available = true;
    return f;
}

const std::array<const char*, kFeatureCount>& feature_names() {
    static const std::array<const char*, kFeatureCount> names = {
        "bpm", "ibi", "sdnn", "sdsd", "rmssd", "pnn20", "pnn50",
        "mad", "sd1", "sd2", "s_area", "sd_ratio", "br"};
    return names;
}

void validate(const NnSeries& series) {
    if (series.intervals.size() < 4)
        throw InvalidInput("NN series needs at least 4 intervals, got " +
                           std::to_string(series.intervals.size()));
    for (std::size_t i = 0; i < series.intervals.size(); ++i) {
        double x = series.intervals[i];
        if (!(x > 0) || !std::isfinite(x))
            throw InvalidInput("NN interval " + std::to_string(i) + " is not a positive finite value");
    }
}

FeatureVector compute_features(const NnSeries& series) {
    validate(series);
    const auto& nn = series.intervals;
    const std::size_t n = nn.size();

    FeatureVector f;
    f.ibi = mean_of(nn);
    f.bpm = 60000.0 / f.ibi;
    f.sdnn = pop_sd(nn, f.ibi);

    std::vector<double> diffs(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) diffs[i] = nn[i + 1] - nn[i];

    const double diff_mean = mean_of(diffs);
    f.sdsd = pop_sd(diffs, diff_mean);

    double sq = 0;
    std::size_t over20 = 0, over50 = 0;
    for (double d : diffs) {
        sq += d * d;
        const double a = std::abs(d);
        if (a > 20.0) ++over20;
        if (a > 50.0) ++over50;
    }
    const auto nd = static_cast<double>(diffs.size());
    f.rmssd = std::sqrt(sq / nd);
    f.pnn20 = static_cast<double>(over20) / nd;
    f.pnn50 = static_cast<double>(over50) / nd;

    std::vector<double> work(nn.begin(), nn.end());
    const double med = median_inplace(work);
    for (std::size_t i = 0; i < n; ++i) work[i] = std::abs(nn[i] - med);
    f.mad = median_inplace(work);

    f.sd1 = std::sqrt(0.5) * f.sdsd;
    f.sd2 = std::sqrt(std::max(0.0, 2.0 * f.sdnn * f.sdnn - 0.5 * f.sdsd * f.sdsd));
    f.s_area = std::numbers::pi * f.sd1 * f.sd2;
    f.sd_ratio = f.sd2 > 0 ? f.sd1 / f.sd2 : 0.0;

    if (series.breathing_rate) {
        f.br = *series.breathing_rate;
        f.br_available = true;
    }
    return f;
}

std::vector<WindowFeatures> compute_batch(std::istream& in) {
    auto rows = csv::read_rows(in);
    std::vector<WindowFeatures> out;
    if (rows.empty()) return out;

    std::size_t first = 0;
    if (!rows[0].empty() && rows[0][0] == "subject_id") first = 1;

    NnSeries current;
    std::string cur_subject;
    Minutes cur_ts = 0;
    bool open = false;

    auto flush = [&] {
        if (!open) return;
        WindowFeatures w;
        w.subject_id = cur_subject;
        w.timestamp = cur_ts;
        try {
            w.features = compute_features(current);
        } catch (const InvalidInput& e) {
            throw InvalidInput("window " + cur_subject + "@" + std::to_string(cur_ts) + ": " + e.what());
        }
        out.push_back(std::move(w));
        current = NnSeries{};
        open = false;
    };

    for (std::size_t r = first; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 3 && row.size() != 4)
            throw InvalidInput("line " + std::to_string(r + 1) + ": expected 3 or 4 columns");
        const Minutes ts = csv::parse_int(row[1], "timestamp");
        if (!open || row[0] != cur_subject || ts != cur_ts) {
            flush();
            cur_subject = row[0];
            cur_ts = ts;
            open = true;
        }
        current.intervals.push_back(csv::parse_double(row[2], "interval_ms"));
        if (row.size() == 4 && !row[3].empty()) current.breathing_rate = csv::parse_double(row[3], "br");
    }
    flush();
    return out;
}

void write_feature_table(std::ostream& out, std::span<const WindowFeatures> rows) {
    csv::Writer w(out);
    std::vector<std::string> cols = {"subject_id", "timestamp"};
    for (const char* name : feature_names()) cols.emplace_back(name);
    cols.emplace_back("br_available");
    w.header(cols);
    for (const auto& row : rows) {
        w.field(row.subject_id).field(static_cast<long long>(row.timestamp));
        for (double v : row.features.to_array()) w.field(v);
        w.field(row.features.br_available);
        w.end_row();
    }
}

}  // namespace caal

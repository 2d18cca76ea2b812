#include "crodobo/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace crodobo {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

void Dataset::validate() const {
    if (!all_finite(features)) {
        throw std::invalid_argument("Dataset: non-finite feature value");
    }
    if (!labels.empty()) {
        if (labels.size() != features.rows()) {
            throw std::invalid_argument("Dataset: label count != row count");
        }
        if (num_classes < 2) {
            throw std::invalid_argument("Dataset: labeled data needs num_classes >= 2");
        }
        for (int y : labels) {
            if (y < 0 || y >= num_classes) {
                throw std::invalid_argument("Dataset: label " + std::to_string(y) +
                                            " outside [0, " + std::to_string(num_classes) + ")");
            }
        }
    }
}

TargetStream::TargetStream(const Dataset& target, std::size_t query_size,
                           std::uint64_t permutation_seed)
    : query_size_(query_size), num_classes_(target.num_classes) {
    if (query_size < 1) {
        throw std::invalid_argument("TargetStream: query_size must be >= 1");
    }
    if (target.size() == 0) {
        throw std::invalid_argument("TargetStream: empty target dataset");
    }
    const std::size_t n = target.size();
    permutation_.resize(n);
    std::iota(permutation_.begin(), permutation_.end(), std::int64_t(0));
    Rng rng(permutation_seed);
    std::shuffle(permutation_.begin(), permutation_.end(), rng.engine());

    features_ = Matrix(n, target.dim());
    labels_.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = std::size_t(permutation_[i]);
        std::copy(target.features.row(src), target.features.row(src) + target.dim(),
                  features_.row(i));
        if (target.labeled()) {
            labels_[i] = target.labels[src];
        }
    }
    total_queries_ = (n + query_size - 1) / query_size;
    consumed_.assign(total_queries_, false);
}

Query TargetStream::take(std::int64_t index) {
    if (index < 0 || std::size_t(index) >= total_queries_) {
        throw std::invalid_argument("TargetStream::take: query index " + std::to_string(index) +
                                    " outside [0, " + std::to_string(total_queries_) + ")");
    }
    if (consumed_[std::size_t(index)]) {
        throw QueryBurnedError("query " + std::to_string(index) +
                               " already burned: single-consumption stream");
    }
    const std::size_t begin = std::size_t(index) * query_size_;
    const std::size_t end = std::min(begin + query_size_, permutation_.size());
    const std::size_t rows = end - begin;

    Matrix block(rows, features_.cols());
    std::vector<int> labels(rows);
    AuditEntry entry;
    entry.query_index = index;
    entry.timestamp = iso8601_utc_now();
    entry.sample_indices.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        real* src = features_.row(begin + r);
        std::copy(src, src + features_.cols(), block.row(r));
        std::fill(src, src + features_.cols(), real(0));  // erase backing storage
        labels[r] = labels_[begin + r];
        entry.sample_indices.push_back(permutation_[begin + r]);
    }
    consumed_[std::size_t(index)] = true;
    audit_.push_back(std::move(entry));
    return Query(index, std::move(block), HiddenLabels(std::move(labels)));
}

std::optional<Query> TargetStream::next() {
    if (exhausted()) {
        return std::nullopt;
    }
    return take(cursor_++);
}

bool TargetStream::is_consumed(std::int64_t index) const {
    if (index < 0 || std::size_t(index) >= total_queries_) {
        return false;
    }
    return consumed_[std::size_t(index)];
}

SourcePool::SourcePool(Dataset source, std::uint64_t bootstrap_seed)
    : data_(std::move(source)), rng_(bootstrap_seed) {
    if (data_.size() == 0) {
        throw std::invalid_argument("SourcePool: empty source dataset");
    }
    if (!data_.labeled()) {
        throw std::invalid_argument("SourcePool: source dataset must be labeled");
    }
    data_.validate();
}

Batch SourcePool::draw(std::size_t batch_size) {
    if (batch_size < 1) {
        throw std::invalid_argument("SourcePool::draw: batch_size must be >= 1");
    }
    Batch batch;
    batch.features = Matrix(batch_size, data_.dim());
    batch.labels.resize(batch_size);
    for (std::size_t r = 0; r < batch_size; ++r) {
        const std::size_t i = rng_.index(data_.size());
        std::copy(data_.features.row(i), data_.features.row(i) + data_.dim(),
                  batch.features.row(r));
        batch.labels[r] = data_.labels[i];
    }
    return batch;
}

std::vector<Batch> SourcePool::bootstrap_batches(std::size_t k, std::size_t batch_size) {
    if (k < 1) {
        throw std::invalid_argument("bootstrap_batches: k must be >= 1");
    }
    if (batch_size < 2) {
        throw std::invalid_argument("bootstrap_batches: batch_size must be >= 2");
    }
    std::vector<Batch> batches;
    batches.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        batches.push_back(draw(batch_size));
    }
    return batches;
}

namespace {

void draw_moons(Rng& rng, std::size_t n, real noise_sd, Matrix& x, std::vector<int>& y) {
    constexpr real kPi = real(3.14159265358979323846);
    x = Matrix(n, 2);
    y.resize(n);
    const std::size_t n0 = n - n / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const real t = kPi * real(rng.uniform());
        real px, py;
        if (i < n0) {
            px = std::cos(t);
            py = std::sin(t);
            y[i] = 0;
        } else {
            px = real(1) - std::cos(t);
            py = real(0.5) - std::sin(t);
            y[i] = 1;
        }
        x(i, 0) = px + real(rng.normal(0.0, double(noise_sd)));
        x(i, 1) = py + real(rng.normal(0.0, double(noise_sd)));
    }
}

}  // namespace

std::pair<Dataset, Dataset> gen_two_moons_shift(const TwoMoonsParams& params) {
    if (params.n_source < 2 || params.n_target < 2) {
        throw std::invalid_argument("gen_two_moons_shift: need at least 2 samples per domain");
    }
    if (params.noise_sd < 0) {
        throw std::invalid_argument("gen_two_moons_shift: noise_sd must be >= 0");
    }

    Dataset source;
    source.num_classes = 2;
    source.domain_tag = "moons-source";
    Rng source_rng(mix_seed(params.seed, 0));
    draw_moons(source_rng, params.n_source, params.noise_sd, source.features, source.labels);

    Dataset target;
    target.num_classes = 2;
    target.domain_tag = "moons-target";
    Rng target_rng(mix_seed(params.seed, 1));
    draw_moons(target_rng, params.n_target, params.noise_sd, target.features, target.labels);

    // Rotate about the midpoint of the two moons, then translate.
    constexpr real kPi = real(3.14159265358979323846);
    const real theta = params.rotation_deg * kPi / real(180);
    const real c = std::cos(theta);
    const real s = std::sin(theta);
    constexpr real cx = real(0.5);
    constexpr real cy = real(0.25);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const real dx = target.features(i, 0) - cx;
        const real dy = target.features(i, 1) - cy;
        target.features(i, 0) = cx + c * dx - s * dy + params.translation[0];
        target.features(i, 1) = cy + s * dx + c * dy + params.translation[1];
    }
    return {std::move(source), std::move(target)};
}

namespace {

// Random unit direction.
Vector unit_vector(Rng& rng, int dim) {
    Vector v(static_cast<std::size_t>(dim));
    real norm = 0;
    do {
        norm = 0;
        for (real& e : v) {
            e = real(rng.normal());
            norm += e * e;
        }
        norm = std::sqrt(norm);
    } while (norm == 0);
    for (real& e : v) {
        e /= norm;
    }
    return v;
}

// Largest-remainder apportionment of `total` into weighted integer counts.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<real>& weights) {
    const real wsum = std::accumulate(weights.begin(), weights.end(), real(0));
    std::vector<std::size_t> counts(weights.size());
    std::vector<std::pair<real, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const real exact = real(total) * weights[i] / wsum;
        counts[i] = std::size_t(std::floor(exact));
        assigned += counts[i];
        remainders.push_back({exact - real(counts[i]), i});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
        counts[remainders[i % remainders.size()].second] += 1;
    }
    return counts;
}

}  // namespace

std::pair<Dataset, Dataset> gen_class_shift_blobs(const BlobsParams& params) {
    if (params.classes < 2) {
        throw std::invalid_argument("gen_class_shift_blobs: classes must be >= 2");
    }
    if (params.dim < 1 || params.n_per_class < 1) {
        throw std::invalid_argument("gen_class_shift_blobs: dim and n_per_class must be >= 1");
    }
    std::vector<real> weights = params.imbalance;
    if (weights.empty()) {
        weights.assign(std::size_t(params.classes), real(1));
    }
    if (int(weights.size()) != params.classes) {
        throw std::invalid_argument("gen_class_shift_blobs: imbalance size != classes");
    }
    for (real w : weights) {
        if (!(w > 0)) {
            throw std::invalid_argument("gen_class_shift_blobs: imbalance weights must be > 0");
        }
    }

    const std::size_t total = std::size_t(params.classes) * params.n_per_class;
    constexpr real kSeparation = real(3);

    Rng mean_rng(mix_seed(params.seed, 0));
    std::vector<Vector> means;
    for (int c = 0; c < params.classes; ++c) {
        Vector m = unit_vector(mean_rng, params.dim);
        for (real& e : m) {
            e *= kSeparation;
        }
        means.push_back(std::move(m));
    }

    Dataset source;
    source.num_classes = params.classes;
    source.domain_tag = "blobs-source";
    source.features = Matrix(total, std::size_t(params.dim));
    source.labels.resize(total);
    Rng source_rng(mix_seed(params.seed, 1));
    std::size_t row = 0;
    for (int c = 0; c < params.classes; ++c) {
        for (std::size_t i = 0; i < params.n_per_class; ++i, ++row) {
            for (int d = 0; d < params.dim; ++d) {
                source.features(row, std::size_t(d)) =
                    means[std::size_t(c)][std::size_t(d)] + real(source_rng.normal());
            }
            source.labels[row] = c;
        }
    }

    Rng shift_rng(mix_seed(params.seed, 2));
    std::vector<Vector> target_means = means;
    for (int c = 0; c < params.classes; ++c) {
        Vector dir = unit_vector(shift_rng, params.dim);
        for (int d = 0; d < params.dim; ++d) {
            target_means[std::size_t(c)][std::size_t(d)] += params.mean_shift * dir[std::size_t(d)];
        }
    }

    const std::vector<std::size_t> counts = apportion(total, weights);
    Dataset target;
    target.num_classes = params.classes;
    target.domain_tag = "blobs-target";
    target.features = Matrix(total, std::size_t(params.dim));
    target.labels.resize(total);
    Rng target_rng(mix_seed(params.seed, 3));
    row = 0;
    for (int c = 0; c < params.classes; ++c) {
        for (std::size_t i = 0; i < counts[std::size_t(c)]; ++i, ++row) {
            for (int d = 0; d < params.dim; ++d) {
                target.features(row, std::size_t(d)) =
                    target_means[std::size_t(c)][std::size_t(d)] +
                    params.cov_scale * real(target_rng.normal());
            }
            target.labels[row] = c;
        }
    }
    return {std::move(source), std::move(target)};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.push_back("");
    }
    return cells;
}

bool parse_real(const std::string& cell, double& out) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
    if (begin == end) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column,
                 std::optional<int> num_classes) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_csv: cannot open " + path);
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::string> header;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) {
            continue;
        }
        std::vector<std::string> cells = split_csv_line(line);
        if (first) {
            first = false;
            bool numeric = true;
            double tmp;
            for (const auto& c : cells) {
                if (!parse_real(c, tmp)) {
                    numeric = false;
                    break;
                }
            }
            if (!numeric) {
                for (auto& c : cells) {
                    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
                }
                header = cells;
                continue;
            }
        }
        std::vector<double> values(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (!parse_real(cells[i], values[i])) {
                throw std::runtime_error("load_csv: " + path + ":" + std::to_string(line_no) +
                                         ": non-numeric cell '" + cells[i] + "'");
            }
        }
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw std::runtime_error("load_csv: " + path + ":" + std::to_string(line_no) +
                                     ": ragged row (" + std::to_string(values.size()) +
                                     " cells, expected " + std::to_string(rows.front().size()) +
                                     ")");
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw std::runtime_error("load_csv: " + path + ": no data rows");
    }

    std::optional<std::size_t> label_idx;
    if (label_column) {
        auto it = std::find(header.begin(), header.end(), *label_column);
        if (it != header.end()) {
            label_idx = std::size_t(it - header.begin());
        } else {
            int idx;
            auto [ptr, ec] = std::from_chars(label_column->data(),
                                             label_column->data() + label_column->size(), idx);
            if (ec == std::errc() && ptr == label_column->data() + label_column->size() &&
                idx >= 0 && std::size_t(idx) < rows.front().size()) {
                label_idx = std::size_t(idx);
            } else {
                throw std::runtime_error("load_csv: " + path + ": label column '" + *label_column +
                                         "' not found" +
                                         (header.empty() ? " (file has no header row)" : ""));
            }
        }
    }

    Dataset out;
    const std::size_t cols = rows.front().size();
    const std::size_t feat_cols = label_idx ? cols - 1 : cols;
    out.features = Matrix(rows.size(), feat_cols);
    if (label_idx) {
        out.labels.resize(rows.size());
    }
    int max_label = -1;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::size_t f = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            if (label_idx && c == *label_idx) {
                const double v = rows[r][c];
                const int y = int(std::llround(v));
                if (std::abs(v - double(y)) > 1e-9 || y < 0) {
                    throw std::runtime_error("load_csv: " + path + ": label '" +
                                             std::to_string(v) +
                                             "' is not a non-negative integer");
                }
                out.labels[r] = y;
                max_label = std::max(max_label, y);
            } else {
                out.features(r, f++) = real(rows[r][c]);
            }
        }
    }
    if (label_idx) {
        out.num_classes = num_classes.value_or(max_label + 1);
        if (max_label >= out.num_classes) {
            throw std::runtime_error("load_csv: " + path + ": label " + std::to_string(max_label) +
                                     " outside [0, " + std::to_string(out.num_classes) + ")");
        }
        if (out.num_classes < 2) {
            throw std::runtime_error("load_csv: " + path + ": need at least 2 classes");
        }
    }
    out.domain_tag = path;
    out.validate();
    return out;
}

void write_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_csv: cannot open " + path);
    }
    for (std::size_t c = 0; c < dataset.dim(); ++c) {
        out << "f" << c << ",";
    }
    out << (dataset.labeled() ? "label" : "") << "\n";
    char buf[64];
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        for (std::size_t c = 0; c < dataset.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", double(dataset.features(r, c)));
            out << buf << ",";
        }
        if (dataset.labeled()) {
            out << dataset.labels[r];
        }
        out << "\n";
    }
}

void save_matrix(const Matrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_matrix: cannot open " + path);
    }
    out.write("CRMX", 4);
    const std::uint32_t rows = std::uint32_t(m.rows());
    const std::uint32_t cols = std::uint32_t(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    for (real v : m.storage()) {
        const double d = double(v);
        out.write(reinterpret_cast<const char*>(&d), 8);
    }
}

Matrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_matrix: cannot open " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CRMX", 4) != 0) {
        throw std::runtime_error("load_matrix: " + path + " is not a CRMX file");
    }
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    Matrix m(rows, cols);
    for (real& v : m.storage()) {
        double d;
        in.read(reinterpret_cast<char*>(&d), 8);
        v = real(d);
    }
    if (!in) {
        throw std::runtime_error("load_matrix: " + path + " truncated");
    }
    return m;
}

void write_audit_log(const std::vector<AuditEntry>& audit, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_audit_log: cannot open " + path);
    }
    for (const AuditEntry& e : audit) {
        nlohmann::json j{{"query_index", e.query_index},
                         {"sample_indices", e.sample_indices},
                         {"timestamp", e.timestamp}};
        out << j.dump() << "\n";
    }
}

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm;
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace crodobo

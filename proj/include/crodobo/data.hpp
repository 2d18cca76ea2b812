#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crodobo/matrix.hpp"
#include "crodobo/rng.hpp"

namespace crodobo {

struct LabelAccess;  // metrics-side reader of sealed labels

struct Dataset {
    Matrix features;
    std::vector<int> labels;  // empty when unlabeled
    int num_classes = 0;
    std::string domain_tag;

    bool labeled() const { return !labels.empty(); }
    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;  // finite features, labels in range
};

// A labeled mini-batch, the unit the engine trains on.
struct Batch {
    Matrix features;
    std::vector<int> labels;
    std::size_t size() const { return features.rows(); }
};

// Class labels that ride along a target query for evaluation. Only the
// metrics module can read the values (through LabelAccess); the adaptation
// engine has no accessor.
class HiddenLabels {
public:
    HiddenLabels() = default;
    explicit HiddenLabels(std::vector<int> values) : values_(std::move(values)) {}
    std::size_t size() const { return values_.size(); }

private:
    friend struct LabelAccess;
    std::vector<int> values_;
};

class QueryBurnedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// One streamed target mini-batch. Single consumption: not copyable, and the
// feature buffer is wiped when the query dies.
class Query {
public:
    Query(std::int64_t index, Matrix features, HiddenLabels labels)
        : index_(index), features_(std::move(features)), labels_(std::move(labels)) {}
    ~Query() { burn(); }

    // Overwrites the feature buffer with zeros; runs automatically on
    // destruction.
    void burn() { features_.zeroize(); }

    Query(const Query&) = delete;
    Query& operator=(const Query&) = delete;
    Query(Query&&) noexcept = default;
    Query& operator=(Query&&) noexcept = default;

    std::int64_t index() const { return index_; }
    const Matrix& features() const { return features_; }
    std::size_t size() const { return features_.rows(); }

    // Moves the sealed labels out (into the run trace) before erasure.
    HiddenLabels take_labels() { return std::move(labels_); }

private:
    std::int64_t index_;
    Matrix features_;
    HiddenLabels labels_;
};

struct AuditEntry {
    std::int64_t query_index;
    std::vector<std::int64_t> sample_indices;  // positions in the original dataset
    std::string timestamp;                     // ISO-8601 UTC
};

// Ordered single-consumption view of a target dataset: a seeded permutation
// chopped into queries of at most `query_size` samples. Each query can be
// taken exactly once; its backing rows are zeroized on the way out.
class TargetStream {
public:
    TargetStream(const Dataset& target, std::size_t query_size, std::uint64_t permutation_seed);

    std::size_t total_queries() const { return total_queries_; }
    std::size_t total_samples() const { return permutation_.size(); }
    std::size_t query_size() const { return query_size_; }
    int num_classes() const { return num_classes_; }
    std::int64_t cursor() const { return cursor_; }
    bool exhausted() const { return std::size_t(cursor_) >= total_queries_; }

    // Next unconsumed query in stream order, or nullopt once exhausted.
    std::optional<Query> next();

    // Indexed access; throws QueryBurnedError if the query was already taken.
    Query take(std::int64_t index);

    bool is_consumed(std::int64_t index) const;
    const std::vector<AuditEntry>& audit() const { return audit_; }
    const std::vector<std::int64_t>& permutation() const { return permutation_; }

    // Test hook: consumed rows must read back as zeros.
    const Matrix& debug_backing() const { return features_; }

private:
    Matrix features_;  // permuted; rows are wiped as queries leave
    std::vector<int> labels_;
    std::vector<std::int64_t> permutation_;
    std::vector<bool> consumed_;
    std::vector<AuditEntry> audit_;
    std::size_t query_size_ = 0;
    std::size_t total_queries_ = 0;
    std::int64_t cursor_ = 0;
    int num_classes_ = 0;
};

// Immutable labeled pool with an explicit stream for bootstrap draws.
class SourcePool {
public:
    SourcePool(Dataset source, std::uint64_t bootstrap_seed);

    const Dataset& data() const { return data_; }

    // One uniform-with-replacement draw of `batch_size` samples.
    Batch draw(std::size_t batch_size);

    // K independent draws of the same size (the cross-domain bootstrap).
    std::vector<Batch> bootstrap_batches(std::size_t k, std::size_t batch_size);

private:
    Dataset data_;
    Rng rng_;
};

struct TwoMoonsParams {
    std::size_t n_source = 2000;
    std::size_t n_target = 2000;
    real noise_sd = real(0.2);
    real rotation_deg = 0;
    std::array<real, 2> translation{0, 0};
    std::uint64_t seed = 1;
};

// Two interleaving moons; the target is a fresh draw with the rotation (about
// the moons' midpoint) and translation applied. Labels are produced for both
// domains; the harness hides target labels behind Query.
std::pair<Dataset, Dataset> gen_two_moons_shift(const TwoMoonsParams& params);

struct BlobsParams {
    int classes = 3;
    std::size_t n_per_class = 500;
    int dim = 2;
    real mean_shift = 1;
    real cov_scale = 1;
    std::vector<real> imbalance;  // target class weights; empty = uniform
    std::uint64_t seed = 1;
};

// Unit-covariance Gaussian blobs per class; target blobs are shifted along
// seeded random directions and rescaled. Target class counts follow the
// imbalance weights by largest-remainder apportionment.
std::pair<Dataset, Dataset> gen_class_shift_blobs(const BlobsParams& params);

// Numeric CSV (RFC-4180-flavored: comma separated, optional header row).
// label_column may be a header name or a 0-based column index.
Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column = {},
                 std::optional<int> num_classes = {});
void write_csv(const Dataset& dataset, const std::string& path);

// Raw matrix file: magic "CRMX", rows/cols as little-endian u32, f64 payload.
void save_matrix(const Matrix& m, const std::string& path);
Matrix load_matrix(const std::string& path);

void write_audit_log(const std::vector<AuditEntry>& audit, const std::string& path);

std::string iso8601_utc_now();

}  // namespace crodobo

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ooc/types.hpp"

namespace ooc {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept {
    return std::hash<std::string_view>{}(s);
  }
};

template <typename V>
using StringMap = std::unordered_map<std::string, V, StringHash, std::equal_to<>>;

/// Dense row-major embedding matrix whose rows are keyed by sample id.
///
/// Immutable once constructed. The constructor enforces unique ids, a row
/// count matching the id count, and finite values.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> values);

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }

  /// Row for `id`; throws a missing-id error when absent.
  std::span<const float> lookup(std::string_view id) const { return row(index_of(id)); }
  std::size_t index_of(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id).has_value(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> values() const noexcept { return values_; }

  /// New matrix holding the rows for `ids`, in that order.
  EmbeddingMatrix select(std::span<const std::string> ids) const;

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  StringMap<std::size_t> index_;
};

/// Companion ids file: same stem, ".ids" extension.
std::filesystem::path ids_path_for(const std::filesystem::path& matrix_path);

EmbeddingMatrix load_matrix(const std::filesystem::path& path);
void save_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// Dot product with 64-bit accumulation in index order.
double dot(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);

/// Divides every row by its L2 norm. Throws a degenerate-input error naming
/// the first all-zero row.
EmbeddingMatrix normalize(const EmbeddingMatrix& m);
bool is_normalized(const EmbeddingMatrix& m, double tolerance = 1e-5);

struct SampleRecord {
  std::string id;
  Topic topic = Topic::climate;
  std::string text;
  std::string image_id;
  Split split = Split::train;
};

struct OcrBox {
  std::int64_t x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

struct OcrRecord {
  std::string image_id;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<OcrBox> boxes;
};

// JSON-lines readers report "path:line: message" on malformed input.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(std::span<const SampleRecord> records, const std::filesystem::path& path);
void validate_manifest(std::span<const SampleRecord> records);

std::vector<OcrRecord> load_ocr(const std::filesystem::path& path);
void save_ocr(std::span<const OcrRecord> records, const std::filesystem::path& path);
void validate(const OcrRecord& rec);

/// Generic `{id, label}` JSON-lines file (e.g. text-image relationship labels).
StringMap<std::string> load_labels(const std::filesystem::path& path);

}  // namespace ooc

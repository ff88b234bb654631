#include "ooc/embedding_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "ooc/errors.hpp"

namespace ooc {

using nlohmann::json;

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim,
                                 std::vector<float> values)
    : ids_(std::move(ids)), dim_(dim), values_(std::move(values)) {
  if (values_.size() != ids_.size() * dim_) {
    fail(ErrorKind::alignment, "matrix has " + std::to_string(values_.size()) +
                                   " values but " + std::to_string(ids_.size()) +
                                   " ids x " + std::to_string(dim_) + " dims");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i].empty()) fail(ErrorKind::validation, "empty id at row " + std::to_string(i));
    if (!index_.emplace(ids_[i], i).second)
      fail(ErrorKind::validation, "duplicate id '" + ids_[i] + "'");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(ErrorKind::validation, "non-finite value in row '" + ids_[i / dim_] + "'");
    }
  }
}

std::optional<std::size_t> EmbeddingMatrix::find(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingMatrix::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorKind::missing_id, "unknown id '" + std::string(id) + "'");
  return it->second;
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::string> ids) const {
  std::vector<float> values;
  values.reserve(ids.size() * dim_);
  for (const auto& id : ids) {
    auto r = lookup(id);
    values.insert(values.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix({ids.begin(), ids.end()}, dim_, std::move(values));
}

std::filesystem::path ids_path_for(const std::filesystem::path& matrix_path) {
  auto p = matrix_path;
  p.replace_extension(".ids");
  return p;
}

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  return out;
}

[[noreturn]] void fail_at(ErrorKind kind, const std::filesystem::path& path, std::size_t line,
                          const std::string& message) {
  fail(kind, path.string() + ":" + std::to_string(line) + ": " + message);
}

// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      fail_at(ErrorKind::format, path, i + 1, e.what());
    }
    try {
      fn(j, i + 1);
    } catch (const json::exception& e) {
      fail_at(ErrorKind::format, path, i + 1, e.what());
    } catch (const Error& e) {
      fail_at(e.kind(), path, i + 1, e.what());
    }
  }
}

}  // namespace

EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, kMagic.data(), 4) != 0) {
    fail(ErrorKind::format, "'" + path.string() + "' is not an EMB1 file");
  }
  const std::uint64_t n = read_u32le(p + 4);
  const std::uint64_t d = read_u32le(p + 8);
  if (bytes.size() != 12 + n * d * 4) {
    fail(ErrorKind::format, "'" + path.string() + "' has " + std::to_string(bytes.size()) +
                                " bytes, header implies " + std::to_string(12 + n * d * 4));
  }
  std::vector<float> values(n * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(read_u32le(p + 12 + 4 * i));
  }

  const auto ids_path = ids_path_for(path);
  auto ids = read_lines(ids_path);
  if (ids.size() != n) {
    fail(ErrorKind::alignment, "'" + ids_path.string() + "' has " + std::to_string(ids.size()) +
                                   " ids for " + std::to_string(n) + " rows");
  }
  try {
    return EmbeddingMatrix(std::move(ids), d, std::move(values));
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void save_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::string bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(12 + m.values().size() * 4);
  write_u32le(bytes, static_cast<std::uint32_t>(m.rows()));
  write_u32le(bytes, static_cast<std::uint32_t>(m.dim()));
  for (float v : m.values()) write_u32le(bytes, std::bit_cast<std::uint32_t>(v));
  open_out(path) << bytes;

  auto ids = open_out(ids_path_for(path));
  for (const auto& id : m.ids()) ids << id << '\n';
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

EmbeddingMatrix normalize(const EmbeddingMatrix& m) {
  std::vector<float> values(m.values().begin(), m.values().end());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm(m.row(i));
    if (n == 0.0) fail(ErrorKind::degenerate, "all-zero embedding for id '" + m.ids()[i] + "'");
    for (std::size_t k = 0; k < m.dim(); ++k) {
      float& v = values[i * m.dim() + k];
      v = static_cast<float>(v / n);
    }
  }
  return EmbeddingMatrix(m.ids(), m.dim(), std::move(values));
}

bool is_normalized(const EmbeddingMatrix& m, double tolerance) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    if (std::abs(norm(m.row(i)) - 1.0) > tolerance) return false;
  return true;
}

void validate_manifest(std::span<const SampleRecord> records) {
  StringMap<std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.id.empty()) fail(ErrorKind::validation, "record " + std::to_string(i) + " has empty id");
    if (r.text.empty()) fail(ErrorKind::validation, "record '" + r.id + "' has empty text");
    if (!seen.emplace(r.id, i).second)
      fail(ErrorKind::validation, "duplicate sample id '" + r.id + "'");
  }
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::vector<SampleRecord> records;
  StringMap<std::size_t> seen;
  for_each_json_line(path, [&](const json& j, std::size_t) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.topic = parse_topic(j.at("topic").get<std::string>());
    r.text = j.at("text").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    if (r.id.empty()) fail(ErrorKind::validation, "empty id");
    if (r.text.empty()) fail(ErrorKind::validation, "empty text for '" + r.id + "'");
    if (!seen.emplace(r.id, records.size()).second)
      fail(ErrorKind::validation, "duplicate sample id '" + r.id + "'");
    records.push_back(std::move(r));
  });
  return records;
}

void save_manifest(std::span<const SampleRecord> records, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& r : records) {
    json j = {{"id", r.id},
              {"topic", to_string(r.topic)},
              {"text", r.text},
              {"image_id", r.image_id},
              {"split", to_string(r.split)}};
    out << j.dump() << '\n';
  }
}

void validate(const OcrRecord& rec) {
  if (rec.width <= 0 || rec.height <= 0) {
    fail(ErrorKind::validation, "image '" + rec.image_id + "' has non-positive size");
  }
  for (const auto& b : rec.boxes) {
    if (!(0 <= b.x1 && b.x1 < b.x2 && b.x2 <= rec.width && 0 <= b.y1 && b.y1 < b.y2 &&
          b.y2 <= rec.height)) {
      std::ostringstream msg;
      msg << "invalid box (" << b.x1 << "," << b.y1 << "," << b.x2 << "," << b.y2
          << ") for image '" << rec.image_id << "' of size " << rec.width << "x" << rec.height;
      fail(ErrorKind::validation, msg.str());
    }
  }
}

std::vector<OcrRecord> load_ocr(const std::filesystem::path& path) {
  std::vector<OcrRecord> records;
  for_each_json_line(path, [&](const json& j, std::size_t) {
    OcrRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.width = j.at("width").get<std::int64_t>();
    r.height = j.at("height").get<std::int64_t>();
    for (const auto& b : j.at("boxes")) {
      if (!b.is_array() || b.size() != 4) fail(ErrorKind::format, "box must have 4 integers");
      r.boxes.push_back({b[0].get<std::int64_t>(), b[1].get<std::int64_t>(),
                         b[2].get<std::int64_t>(), b[3].get<std::int64_t>()});
    }
    validate(r);
    records.push_back(std::move(r));
  });
  return records;
}

void save_ocr(std::span<const OcrRecord> records, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& r : records) {
    json boxes = json::array();
    for (const auto& b : r.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    json j = {{"image_id", r.image_id},
              {"width", r.width},
              {"height", r.height},
              {"boxes", std::move(boxes)}};
    out << j.dump() << '\n';
  }
}

StringMap<std::string> load_labels(const std::filesystem::path& path) {
  StringMap<std::string> labels;
  for_each_json_line(path, [&](const json& j, std::size_t) {
    auto id = j.at("id").get<std::string>();
    if (!labels.emplace(id, j.at("label").get<std::string>()).second)
      fail(ErrorKind::validation, "duplicate id '" + id + "'");
  });
  return labels;
}

}  // namespace ooc

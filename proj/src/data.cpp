#include "nsvm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "nsvm/error.hpp"

namespace nsvm::data {

namespace {

constexpr std::size_t kRingnormDim = 20;
constexpr std::size_t kImageSide = 28;

std::string line_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return path.string() + ":" + std::to_string(line) + ": " + what;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  if (*first == '+') return false;
  const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

Split split_by_holdout(const Dataset& data, std::vector<std::size_t> holdout) {
  std::sort(holdout.begin(), holdout.end());
  std::vector<bool> held(data.size(), false);
  for (auto i : holdout) held[i] = true;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!held[i]) keep.push_back(i);
  return {data.subset(keep), data.subset(holdout)};
}

std::vector<std::size_t> indices_of(const Dataset& data, int label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] == label) idx.push_back(i);
  return idx;
}

}  // namespace

bool Dataset::has_both_classes() const {
  const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), -1) != labels.end();
  return pos && neg;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t c = 0; c < indices.size(); ++c) {
    require(indices[c] < size(), ErrorCode::invalid_argument, "subset index out of range");
    out.inputs.col(static_cast<Eigen::Index>(c)) = inputs.col(static_cast<Eigen::Index>(indices[c]));
    out.labels.push_back(labels[indices[c]]);
  }
  out.standardization = standardization;
  return out;
}

void Dataset::validate() const {
  require(static_cast<std::size_t>(inputs.cols()) == labels.size(), ErrorCode::dimension_mismatch,
          "dataset has " + std::to_string(inputs.cols()) + " inputs but " + std::to_string(labels.size()) + " labels");
  require(!labels.empty(), ErrorCode::invalid_argument, "dataset is empty");
  require(std::all_of(labels.begin(), labels.end(), [](int y) { return y == 1 || y == -1; }),
          ErrorCode::invalid_argument, "labels must be -1 or 1");
  require(inputs.allFinite(), ErrorCode::non_finite, "dataset contains non-finite inputs");
}

Dataset gen_ringnorm(std::size_t n_samples, std::uint64_t seed) {
  require(n_samples >= 2, ErrorCode::invalid_argument, "ringnorm needs at least 2 samples");
  Rng rng(seed);
  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = i < (n_samples + 1) / 2 ? 1 : -1;
  for (std::size_t i = n_samples - 1; i > 0; --i) std::swap(labels[i], labels[rng.uniform_index(i + 1)]);

  const double shift = 2.0 / std::sqrt(static_cast<double>(kRingnormDim));
  Dataset out;
  out.inputs.resize(kRingnormDim, static_cast<Eigen::Index>(n_samples));
  for (std::size_t j = 0; j < n_samples; ++j)
    for (std::size_t r = 0; r < kRingnormDim; ++r) {
      const double z = rng.normal();
      out.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = labels[j] == 1 ? 2.0 * z : shift + z;
    }
  out.labels = std::move(labels);
  return out;
}

Dataset gen_two_gaussian_images(std::size_t n_samples, std::uint64_t seed, double noise) {
  require(n_samples >= 2, ErrorCode::invalid_argument, "image generator needs at least 2 samples");
  constexpr std::size_t side = kImageSide;
  Vector ring = Vector::Zero(side * side);
  Vector stroke = Vector::Zero(side * side);
  const double c = (side - 1) / 2.0;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double r = std::hypot(y - c, x - c);
      const auto idx = static_cast<Eigen::Index>(y * side + x);
      if (r > 6.0 && r < 10.0) ring(idx) = 0.8;
      if (x >= 12 && x <= 15 && y >= 4 && y <= 23) stroke(idx) = 0.8;
    }
  Rng rng(seed);
  Dataset out;
  out.inputs.resize(side * side, static_cast<Eigen::Index>(n_samples));
  out.labels.resize(n_samples);
  for (std::size_t j = 0; j < n_samples; ++j) {
    const int y = j % 2 == 0 ? -1 : 1;
    const Vector& mean = y == -1 ? ring : stroke;
    for (Eigen::Index p = 0; p < mean.size(); ++p) out.inputs(p, static_cast<Eigen::Index>(j)) = mean(p) + noise * rng.normal();
    out.labels[j] = y;
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse, line_error(path, 1, "missing header"));
  const auto header = split_fields(line);
  require(header.size() >= 2 && header.back() == "label", ErrorCode::parse,
          line_error(path, 1, "header must be f0,...,f{d-1},label"));
  const std::size_t d = header.size() - 1;
  for (std::size_t i = 0; i < d; ++i)
    require(header[i] == "f" + std::to_string(i), ErrorCode::parse,
            line_error(path, 1, "expected column 'f" + std::to_string(i) + "'"));

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    require(line.find('\r') == std::string::npos, ErrorCode::parse, line_error(path, line_no, "CR line ending"));
    const auto fields = split_fields(line);
    require(fields.size() == d + 1, ErrorCode::parse,
            line_error(path, line_no,
                       "expected " + std::to_string(d + 1) + " columns, found " + std::to_string(fields.size())));
    for (std::size_t i = 0; i < d; ++i) {
      double v = 0.0;
      require(parse_double(fields[i], v), ErrorCode::parse,
              line_error(path, line_no, "malformed value '" + std::string(fields[i]) + "'"));
      values.push_back(v);
    }
    const std::string_view label = fields.back();
    require(label == "1" || label == "-1", ErrorCode::parse,
            line_error(path, line_no, "label must be -1 or 1, found '" + std::string(label) + "'"));
    labels.push_back(label == "1" ? 1 : -1);
  }
  require(!labels.empty(), ErrorCode::parse, path.string() + ": no data rows");
  Dataset out;
  out.inputs = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(labels.size()));
  out.labels = std::move(labels);
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::string text;
  for (std::size_t i = 0; i < data.dim(); ++i) text += "f" + std::to_string(i) + ",";
  text += "label\n";
  char buf[32];
  for (std::size_t j = 0; j < data.size(); ++j) {
    for (std::size_t i = 0; i < data.dim(); ++i) {
      const double v = data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
      text.append(buf, res.ptr);
      text += ',';
    }
    text += data.labels[j] == 1 ? "1\n" : "-1\n";
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

Dataset load_idx_images(const std::filesystem::path& images, const std::filesystem::path& labels, int negative,
                        int positive) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);
  require(img.size() >= 16 && read_be32(img, 0) == 0x00000803, ErrorCode::parse,
          images.string() + ": not an IDX image file (magic 0x00000803)");
  require(lab.size() >= 8 && read_be32(lab, 0) == 0x00000801, ErrorCode::parse,
          labels.string() + ": not an IDX label file (magic 0x00000801)");
  const std::size_t count = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t label_count = read_be32(lab, 4);
  require(img.size() == 16 + count * rows * cols, ErrorCode::parse,
          images.string() + ": payload size does not match header (truncated or trailing bytes)");
  require(lab.size() == 8 + label_count, ErrorCode::parse,
          labels.string() + ": payload size does not match header (truncated or trailing bytes)");
  require(label_count == count, ErrorCode::parse,
          "image file holds " + std::to_string(count) + " images but label file holds " + std::to_string(label_count));

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < count; ++i)
    if (lab[8 + i] == negative || lab[8 + i] == positive) keep.push_back(i);
  Dataset out;
  const std::size_t pixels = rows * cols;
  out.inputs.resize(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const std::size_t base = 16 + keep[c] * pixels;
    for (std::size_t p = 0; p < pixels; ++p)
      out.inputs(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)) = img[base + p] / 255.0;
    out.labels.push_back(lab[8 + keep[c]] == positive ? 1 : -1);
  }
  return out;
}

Standardization standardize_fit(const Dataset& train) {
  require(train.size() >= 2, ErrorCode::invalid_argument, "standardization needs at least 2 samples");
  const double m = static_cast<double>(train.size());
  Standardization s;
  s.mean = train.inputs.rowwise().mean();
  const Matrix centered = train.inputs.colwise() - s.mean;
  s.stddev = (centered.array().square().rowwise().sum() / (m - 1.0)).sqrt().matrix();
  for (Eigen::Index i = 0; i < s.stddev.size(); ++i)
    if (!(s.stddev(i) > 0.0)) s.stddev(i) = 1.0;
  return s;
}

Dataset standardize_apply(const Standardization& stats, const Dataset& data) {
  require(static_cast<std::size_t>(stats.mean.size()) == data.dim(), ErrorCode::dimension_mismatch,
          "standardization statistics do not match data dimension");
  Dataset out = data;
  out.inputs = ((data.inputs.colwise() - stats.mean).array().colwise() / stats.stddev.array()).matrix();
  out.standardization = stats;
  return out;
}

Split split_fraction(const Dataset& data, double fraction, bool stratified, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::invalid_argument, "split fraction must be in (0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> holdout;
  const auto take = [&](const std::vector<std::size_t>& pool) {
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
    require(n >= 1 && n < pool.size(), ErrorCode::invalid_argument, "split fraction leaves an empty part");
    for (auto k : rng.sample_without_replacement(pool.size(), n)) holdout.push_back(pool[k]);
  };
  if (stratified) {
    take(indices_of(data, -1));
    take(indices_of(data, 1));
  } else {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(all);
  }
  return split_by_holdout(data, std::move(holdout));
}

Split split_per_class(const Dataset& data, std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> holdout;
  for (int label : {-1, 1}) {
    const auto pool = indices_of(data, label);
    require(per_class <= pool.size(), ErrorCode::invalid_argument,
            "cannot hold out " + std::to_string(per_class) + " samples of label " + std::to_string(label) +
                ", only " + std::to_string(pool.size()) + " available");
    for (auto k : rng.sample_without_replacement(pool.size(), per_class)) holdout.push_back(pool[k]);
  }
  return split_by_holdout(data, std::move(holdout));
}

}  // namespace nsvm::data

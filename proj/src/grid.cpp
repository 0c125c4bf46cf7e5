#include "cdkit/grid.hpp"

#include <algorithm>
#include <cctype>

#include "cdkit/errors.hpp"

namespace cdkit::grid {

void GridSpec::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("grid: rows and cols must be >= 1");
  if (image_h < 1 || image_w < 1) throw ConfigError("grid: image dims must be >= 1");
  if (image_h % rows != 0)
    throw ConfigError("grid: image_h not divisible by rows");
  if (image_w % cols != 0)
    throw ConfigError("grid: image_w not divisible by cols");
}

void BlockLabelSet::validate() const {
  grid.validate();
  for (int b : changed) {
    if (b < 0 || b >= grid.block_count())
      throw ConfigError("block labels: index out of range");
  }
}

ParseError::ParseError(size_t offset, const std::string& reason)
    : std::runtime_error("parse error at byte " + std::to_string(offset) + ": " + reason),
      offset_(offset),
      reason_(reason) {}

FormatError::FormatError(const std::string& reason)
    : std::runtime_error("format error: " + reason), reason_(reason) {}

BlockLabelSet block_labels_from_mask(const ChangeMask& mask, const GridSpec& grid,
                                     double tau) {
  grid.validate();
  if (tau < 0.0 || tau >= 1.0) throw ConfigError("tau: must be in [0,1)");
  if (mask.h != grid.image_h || mask.w != grid.image_w)
    throw std::invalid_argument("mask " + std::to_string(mask.h) + "x" +
                                std::to_string(mask.w) + " does not match grid image " +
                                std::to_string(grid.image_h) + "x" +
                                std::to_string(grid.image_w));
  const int bh = grid.block_h(), bw = grid.block_w();
  const double area = double(bh) * bw;
  BlockLabelSet out{grid, {}};
  for (int br = 0; br < grid.rows; ++br) {
    for (int bc = 0; bc < grid.cols; ++bc) {
      long count = 0;
      for (int y = br * bh; y < (br + 1) * bh; ++y)
        for (int x = bc * bw; x < (bc + 1) * bw; ++x)
          count += mask.at(y, x) != 0;
      if (double(count) > tau * area) out.changed.insert(br * grid.cols + bc);
    }
  }
  return out;
}

std::string serialize_runs(const BlockLabelSet& labels) {
  labels.validate();
  std::string out;
  auto it = labels.changed.begin();
  while (it != labels.changed.end()) {
    int start = *it;
    int end = start;
    ++it;
    while (it != labels.changed.end() && *it == end + 1) end = *it++;
    if (!out.empty()) out += ',';
    out += std::to_string(start);
    if (end > start) out += '-' + std::to_string(end);
  }
  return out;
}

namespace {

// Reads a decimal index at pos; advances pos past it.
int read_index(const std::string& s, size_t& pos, size_t token_start, int limit) {
  size_t begin = pos;
  long long v = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + (s[pos] - '0');
    if (v >= (1LL << 31)) throw ParseError(token_start, "index out of range");
    ++pos;
  }
  if (pos == begin) {
    if (pos < s.size() && s[pos] == '-')
      throw ParseError(token_start, "negative index");
    throw ParseError(token_start, "malformed token");
  }
  if (v >= limit) throw ParseError(token_start, "index out of range");
  return int(v);
}

bool is_none_literal(const std::string& s) {
  if (s.size() != 4) return false;
  const char* t = "none";
  for (int i = 0; i < 4; ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != t[i]) return false;
  return true;
}

}  // namespace

BlockLabelSet parse_runs(const std::string& text, const GridSpec& grid, bool strict) {
  grid.validate();
  BlockLabelSet out{grid, {}};

  std::string body = text;
  if (!strict) {
    // trim surrounding whitespace; the serializer never emits any
    size_t a = body.find_first_not_of(" \t\r\n");
    size_t b = body.find_last_not_of(" \t\r\n");
    body = (a == std::string::npos) ? "" : body.substr(a, b - a + 1);
    if (is_none_literal(body)) return out;
  }
  if (body.empty()) return out;

  const int limit = grid.block_count();
  size_t pos = 0;
  int prev_end = -2;  // canonical items must start at >= prev_end + 2
  bool first = true;
  while (true) {
    size_t item_start = pos;
    if (!strict)
      while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\t')) ++pos;
    size_t token_start = pos;
    int a = read_index(body, pos, token_start, limit);
    int b = a;
    if (pos < body.size() && body[pos] == '-') {
      ++pos;
      b = read_index(body, pos, token_start, limit);
      if (a >= b) throw ParseError(token_start, "reversed range");
    }
    if (!strict)
      while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\t')) ++pos;
    if (strict) {
      if (!first && a < prev_end + 2)
        throw ParseError(item_start, "non-canonical item order");
      prev_end = b;
    }
    for (int i = a; i <= b; ++i) out.changed.insert(i);
    first = false;
    if (pos == body.size()) break;
    if (body[pos] != ',') throw ParseError(pos, "malformed token");
    ++pos;
    if (pos == body.size()) throw ParseError(pos, "malformed token");
  }
  return out;
}

ChangeMask coarse_mask_from_blocks(const BlockLabelSet& labels) {
  labels.validate();
  const GridSpec& g = labels.grid;
  ChangeMask mask = ChangeMask::zeros(g.image_h, g.image_w);
  const int bh = g.block_h(), bw = g.block_w();
  for (int b : labels.changed) {
    int br = b / g.cols, bc = b % g.cols;
    for (int y = br * bh; y < (br + 1) * bh; ++y)
      for (int x = bc * bw; x < (bc + 1) * bw; ++x) mask.at(y, x) = 1;
  }
  return mask;
}

namespace {

// All occurrences of `tag` in s.
std::vector<size_t> find_all(const std::string& s, const std::string& tag) {
  std::vector<size_t> hits;
  size_t pos = 0;
  while ((pos = s.find(tag, pos)) != std::string::npos) {
    hits.push_back(pos);
    pos += tag.size();
  }
  return hits;
}

}  // namespace

StructuredOutput extract_structured(const std::string& raw) {
  auto think_open = find_all(raw, "<think>");
  auto think_close = find_all(raw, "</think>");
  auto answer_open = find_all(raw, "<answer>");
  auto answer_close = find_all(raw, "</answer>");

  if (think_open.empty()) throw FormatError("missing think tag");
  if (think_open.size() > 1) throw FormatError("duplicate think tag");
  if (answer_open.empty()) throw FormatError("missing answer tag");
  if (answer_open.size() > 1) throw FormatError("duplicate answer tag");
  if (think_close.size() != 1) {
    throw FormatError(think_close.empty() ? "unclosed think tag"
                                          : "duplicate think close tag");
  }
  if (answer_close.size() != 1) {
    throw FormatError(answer_close.empty() ? "unclosed answer tag"
                                           : "duplicate answer close tag");
  }
  size_t to = think_open[0], tc = think_close[0];
  size_t ao = answer_open[0], ac = answer_close[0];
  if (ao < to) throw FormatError("answer before think");
  if (tc < to) throw FormatError("unclosed think tag");
  if (ac < ao) throw FormatError("unclosed answer tag");
  if (ao < tc + 8) throw FormatError("answer nested in think");  // 8 = strlen("</think>")

  StructuredOutput out;
  out.raw = raw;
  out.think = raw.substr(to + 7, tc - (to + 7));
  out.answer = raw.substr(ao + 8, ac - (ao + 8));
  return out;
}

}  // namespace cdkit::grid

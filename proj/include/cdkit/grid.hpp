#pragma once
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdkit::grid {

// Row-major block partition of an image. Default is the 8x8 layout with
// block indices 0..63.
struct GridSpec {
  int rows = 8;
  int cols = 8;
  int image_h = 64;
  int image_w = 64;

  int block_count() const { return rows * cols; }
  int block_h() const { return image_h / rows; }
  int block_w() const { return image_w / cols; }
  int block_index(int y, int x) const {
    return (y / block_h()) * cols + (x / block_w());
  }
  void validate() const;  // throws ConfigError
  bool operator==(const GridSpec&) const = default;
};

// Which blocks of the grid are marked changed.
struct BlockLabelSet {
  GridSpec grid;
  std::set<int> changed;

  void validate() const;
  bool operator==(const BlockLabelSet&) const = default;
};

// Binary per-pixel change map, row-major, values in {0,1}.
struct ChangeMask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> values;

  static ChangeMask zeros(int h, int w) {
    return ChangeMask{h, w, std::vector<uint8_t>(size_t(h) * w, 0)};
  }
  uint8_t at(int y, int x) const { return values[size_t(y) * w + x]; }
  uint8_t& at(int y, int x) { return values[size_t(y) * w + x]; }
  bool operator==(const ChangeMask&) const = default;
};

// Malformed run string. Carries the byte offset of the offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(size_t offset, const std::string& reason);
  size_t offset() const { return offset_; }
  const std::string& reason() const { return reason_; }

 private:
  size_t offset_;
  std::string reason_;
};

// Violation of the <think>/<answer> tag structure. Distinct from ParseError:
// this one gates the format reward.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& reason);
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

// One tagged model output: free-text reasoning plus a run-string answer.
struct StructuredOutput {
  std::string think;
  std::string answer;
  std::string raw;
};

// Block b is changed iff the fraction of 1-pixels inside it is strictly
// greater than tau. tau=0 means any changed pixel marks the block.
BlockLabelSet block_labels_from_mask(const ChangeMask& mask, const GridSpec& grid,
                                     double tau = 0.0);

// Maximal runs of consecutive indices as "a-b", singletons as "n", joined by
// commas in ascending order. The empty set serializes to "".
std::string serialize_runs(const BlockLabelSet& labels);

// Inverse of serialize_runs. Tolerant mode (default) accepts unsorted items,
// duplicates, adjacent singletons and the literal "none", and canonicalizes;
// strict mode demands the exact serialize_runs grammar. Throws ParseError.
BlockLabelSet parse_runs(const std::string& text, const GridSpec& grid,
                         bool strict = false);

// Rasterize: pixel (y,x) = 1 iff its enclosing block is labeled changed.
ChangeMask coarse_mask_from_blocks(const BlockLabelSet& labels);

// Split raw text into think/answer bodies. Requires exactly one
// <think>...</think> followed by exactly one <answer>...</answer>.
// Throws FormatError.
StructuredOutput extract_structured(const std::string& raw);

}  // namespace cdkit::grid

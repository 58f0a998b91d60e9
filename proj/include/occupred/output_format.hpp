#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "occupred/errors.hpp"

namespace occupred {

inline constexpr std::string_view kReasonTag = "REASON:";
inline constexpr std::string_view kOccupationTag = "NEXT_OCCUPATION:";

enum class OutputMode { joint, reason_only, prediction_only };

struct ParsedOutput {
  std::string reason;
  std::string raw_prediction;
};

class MissingTag : public Error {
 public:
  explicit MissingTag(std::string tag)
      : Error("MissingTag", "model output has no usable " + tag + " block"), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

/// Lenient scan: the last occurrence of each tag wins; a block that is
/// absent or empty comes back as nullopt. Text before the reason tag is
/// ignored. The reason runs until the next occupation tag (or the end); the
/// prediction is the rest of its line, or the next non-empty line.
struct TaggedBlocks {
  std::optional<std::string> reason;
  std::optional<std::string> prediction;
};
TaggedBlocks scan_tagged_output(std::string_view text);

/// Strict parse for an expected mode; throws MissingTag naming the tag.
/// In reason-only mode the prediction is always empty.
ParsedOutput parse_model_output(std::string_view text, OutputMode mode);

std::string format_joint_output(std::string_view reason, std::string_view occupation_title);
std::string format_reason_output(std::string_view reason);
std::string format_prediction_output(std::string_view occupation_title);

}  // namespace occupred

#include "occupred/output_format.hpp"

namespace occupred {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<std::string> non_empty(std::string s) {
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

TaggedBlocks scan_tagged_output(std::string_view text) {
  TaggedBlocks out;
  const auto occ = text.rfind(kOccupationTag);
  const auto rsn = text.rfind(kReasonTag);

  if (rsn != std::string_view::npos) {
    const auto start = rsn + kReasonTag.size();
    auto end = text.find(kOccupationTag, start);
    if (end == std::string_view::npos) end = text.size();
    out.reason = non_empty(trim(text.substr(start, end - start)));
  }
  if (occ != std::string_view::npos) {
    auto rest = text.substr(occ + kOccupationTag.size());
    while (!rest.empty()) {
      const auto nl = rest.find('\n');
      auto line = trim(rest.substr(0, nl));
      if (!line.empty()) {
        out.prediction = std::move(line);
        break;
      }
      if (nl == std::string_view::npos) break;
      rest = rest.substr(nl + 1);
    }
  }
  return out;
}

ParsedOutput parse_model_output(std::string_view text, OutputMode mode) {
  auto blocks = scan_tagged_output(text);
  ParsedOutput out;
  if (mode != OutputMode::prediction_only) {
    if (!blocks.reason) throw MissingTag(std::string(kReasonTag.substr(0, kReasonTag.size() - 1)));
    out.reason = *blocks.reason;
  } else if (blocks.reason) {
    out.reason = *blocks.reason;
  }
  if (mode != OutputMode::reason_only) {
    if (!blocks.prediction) throw MissingTag(std::string(kOccupationTag.substr(0, kOccupationTag.size() - 1)));
    out.raw_prediction = *blocks.prediction;
  }
  return out;
}

std::string format_joint_output(std::string_view reason, std::string_view occupation_title) {
  return format_reason_output(reason) + "\n" + format_prediction_output(occupation_title);
}

std::string format_reason_output(std::string_view reason) {
  return std::string(kReasonTag) + " " + std::string(reason);
}

std::string format_prediction_output(std::string_view occupation_title) {
  return std::string(kOccupationTag) + " " + std::string(occupation_title);
}

}  // namespace occupred

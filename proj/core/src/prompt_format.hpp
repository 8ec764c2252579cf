#pragma once

// Line grammar shared by the prompt builders and the mock clients.

#include <string>
#include <string_view>
#include <vector>

namespace sail::prompt {

inline constexpr std::string_view kExemplar = "- image: ";
inline constexpr std::string_view kModality = " | modality: ";
inline constexpr std::string_view kOrgans = " | organs: ";
inline constexpr std::string_view kAge = " | age: ";
inline constexpr std::string_view kSex = " | sex: ";
inline constexpr std::string_view kQuery = "Query: ";
inline constexpr std::string_view kUnknown = "unknown";
inline constexpr std::string_view kNone = "NONE";

struct ExemplarLine {
  std::string image;
  std::string modality;
  std::vector<std::string> organs;
};

std::vector<ExemplarLine> parse_exemplars(std::string_view prompt);
/// "A. text" lines, in order.
std::vector<std::string> parse_lettered(std::string_view prompt);
/// "1. text" lines, in order.
std::vector<std::string> parse_numbered(std::string_view prompt);
std::string parse_query(std::string_view prompt);

/// Lowercased runs of letters, digits and underscores.
std::vector<std::string> tokenize(std::string_view text);

/// Most frequent organ and modality over the exemplars, ties to the
/// lexicographically smaller label. Empty organ when no exemplar has one.
struct Dominant {
  std::string organ;
  std::string modality;
};
Dominant dominant(const std::vector<ExemplarLine>& exemplars);

}  // namespace sail::prompt

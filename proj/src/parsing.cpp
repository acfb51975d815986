#include "toc/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>

#include <json.hpp>

#include "toc/errors.hpp"

namespace toc::prompts {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

// Length of a "Step <digits>:" marker starting at `pos`, or 0.
size_t marker_length(std::string_view text, size_t pos) {
  static constexpr std::string_view kStep = "Step ";
  if (text.compare(pos, kStep.size(), kStep) != 0) return 0;
  size_t i = pos + kStep.size();
  const size_t digits_begin = i;
  while (i < text.size() && is_digit(text[i])) ++i;
  if (i == digits_begin || i >= text.size() || text[i] != ':') return 0;
  return i + 1 - pos;
}

std::string strip_once(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    const size_t len = marker_length(text, i);
    if (len == 0) {
      out.push_back(text[i++]);
      continue;
    }
    i += len;
    if (i < text.size() && text[i] == ' ') ++i;
    if (!out.empty() && out.back() == ' ' && i < text.size() && text[i] == ' ') ++i;
  }
  return out;
}

}  // namespace

std::vector<int> parse_index_array(std::string_view reply, bool strict) {
  std::string_view body = trim(reply);
  if (!strict) {
    const auto open = body.find('[');
    const auto close = open == std::string_view::npos ? open : body.find(']', open);
    if (close == std::string_view::npos) throw ParseError("no bracketed array in reply");
    body = body.substr(open, close - open + 1);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError("reply is not a JSON array: " + std::string(body.substr(0, 80)));
  }
  if (!j.is_array()) throw ParseError("reply is not a JSON array");
  std::vector<int> out;
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw ParseError("array element is not an integer");
    const auto v = e.get<long long>();
    if (v < INT32_MIN || v > INT32_MAX) throw ParseError("array element out of integer range");
    out.push_back(static_cast<int>(v));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool parse_yes_no(std::string_view reply) {
  size_t i = 0;
  while (i < reply.size() && !std::isalnum(static_cast<unsigned char>(reply[i]))) ++i;
  size_t j = i;
  while (j < reply.size() && std::isalpha(static_cast<unsigned char>(reply[j]))) ++j;
  std::string word(reply.substr(i, j - i));
  for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (word == "yes") return true;
  if (word == "no") return false;
  throw ParseError("expected Yes or No, got: " + std::string(reply.substr(0, 40)));
}

std::vector<int> find_step_markers(std::string_view text) {
  std::vector<int> out;
  for (size_t i = 0; i < text.size();) {
    const size_t len = marker_length(text, i);
    if (len == 0) {
      ++i;
      continue;
    }
    const auto digits = text.substr(i + 5, len - 6);
    int k = 0;
    for (char c : digits) k = std::min(k * 10 + (c - '0'), 1'000'000);
    out.push_back(k);
    i += len;
  }
  return out;
}

std::string strip_step_markers(std::string_view text) {
  std::string cur(text);
  for (;;) {
    std::string next = strip_once(cur);
    if (next == cur) return cur;
    cur = std::move(next);
  }
}

}  // namespace toc::prompts

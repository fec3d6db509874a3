#include "cyclelab/field_io.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "cyclelab/errors.hpp"

namespace cyclelab {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

int parse_int(std::string_view tok, int line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0) {
    throw ParseError(line, "bad exponent '" + std::string(tok) + "'");
  }
  return v;
}

double parse_double(std::string_view tok, int line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "bad coefficient '" + std::string(tok) + "'");
  }
  return v;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

VectorField parse_field(std::string_view text) {
  Poly2 p, q;
  int declared = -2;
  bool any_term = false;
  std::set<std::tuple<char, int, int>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (tok[0] == "degree") {
      if (tok.size() != 2) throw ParseError(line_no, "expected 'degree <n>'");
      if (declared != -2) throw ParseError(line_no, "duplicate degree header");
      declared = parse_int(tok[1], line_no);
    } else if (tok[0] == "P" || tok[0] == "Q") {
      if (tok.size() != 4) throw ParseError(line_no, "expected '" + std::string(tok[0]) + " <i> <j> <coeff>'");
      const int i = parse_int(tok[1], line_no);
      const int j = parse_int(tok[2], line_no);
      const double c = parse_double(tok[3], line_no);
      if (!seen.emplace(tok[0][0], i, j).second) {
        throw ParseError(line_no, "duplicate term " + std::string(tok[0]) + " " +
                                      std::to_string(i) + " " + std::to_string(j));
      }
      (tok[0] == "P" ? p : q).add_term(i, j, c);
      any_term = true;
    } else {
      throw ParseError(line_no, "unknown record '" + std::string(tok[0]) + "'");
    }
    if (end == text.size()) break;
  }
  if (!any_term) throw ParseError(0, "no P/Q lines");
  if (declared == -2) throw ParseError(0, "missing 'degree <n>' header");
  VectorField X(std::move(p), std::move(q));
  if (X.degree() != declared) {
    throw ParseError(0, "declared degree " + std::to_string(declared) +
                            " but terms have degree " + std::to_string(X.degree()));
  }
  return X;
}

std::string format_field(const VectorField& X, std::string_view comment) {
  std::ostringstream os;
  if (!comment.empty()) {
    std::istringstream lines{std::string(comment)};
    for (std::string l; std::getline(lines, l);) os << "# " << l << "\n";
  }
  os << "degree " << X.degree() << "\n";
  for (const auto& [key, c] : X.p().terms()) {
    os << "P " << key.first << " " << key.second << " " << shortest(c) << "\n";
  }
  for (const auto& [key, c] : X.q().terms()) {
    os << "Q " << key.first << " " << key.second << " " << shortest(c) << "\n";
  }
  return os.str();
}

VectorField read_field_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open field file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_field(ss.str());
}

void write_field_file(const std::filesystem::path& path, const VectorField& X,
                      std::string_view comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write field file " + path.string());
  out << format_field(X, comment);
}

}  // namespace cyclelab

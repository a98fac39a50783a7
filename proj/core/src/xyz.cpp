// SPDX-License-Identifier: Apache-2.0

#include "scd/xyz.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "scd/elements.hpp"

namespace scd {

ParseError::ParseError(std::size_t line, const std::string &message)
  : std::runtime_error("line " + std::to_string(line) + ": " + message),
    line_(line) {}

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  std::size_t line_number() const { return line_; }

  std::string_view next() {
    const std::size_t end = text_.find('\n', pos_);
    std::string_view line = end == std::string_view::npos
                              ? text_.substr(pos_)
                              : text_.substr(pos_, end - pos_);
    pos_ = end == std::string_view::npos ? text_.size() : end + 1;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  }

  bool rest_is_blank() const {
    return text_.find_first_not_of(" \t\r\n", pos_) == std::string_view::npos;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size()) break;
    const std::size_t j = s.find_first_of(" \t", i);
    out.push_back(s.substr(i, j == std::string_view::npos ? s.npos : j - i));
    i = j == std::string_view::npos ? s.size() : j;
  }
  return out;
}

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  const char *first = token.data();
  const char *last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || token.empty()) {
    throw ParseError(line, "malformed float '" + std::string(token) + "'");
  }
  return value;
}

std::size_t parse_count(std::string_view line_text, std::size_t line) {
  const auto tokens = split_ws(line_text);
  std::size_t n = 0;
  if (tokens.size() != 1) throw ParseError(line, "expected an atom count");
  const auto [ptr, ec] = std::from_chars(
    tokens[0].data(), tokens[0].data() + tokens[0].size(), n);
  if (ec != std::errc() || ptr != tokens[0].data() + tokens[0].size()) {
    throw ParseError(line, "malformed atom count '" + std::string(tokens[0]) +
                             "'");
  }
  return n;
}

std::map<std::string, std::string, std::less<>>
parse_comment(std::string_view s, std::size_t line) {
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size()) break;
    const std::size_t eq = s.find('=', i);
    const std::size_t space = s.find_first_of(" \t", i);
    if (eq == std::string_view::npos || (space != s.npos && space < eq)) {
      // Bare word: ignored.
      i = space == s.npos ? s.size() : space;
      continue;
    }
    std::string key(s.substr(i, eq - i));
    i = eq + 1;
    std::string value;
    if (i < s.size() && s[i] == '"') {
      const std::size_t close = s.find('"', i + 1);
      if (close == std::string_view::npos) {
        throw ParseError(line, "unterminated quote for key '" + key + "'");
      }
      value = std::string(s.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      const std::size_t end = s.find_first_of(" \t", i);
      value = std::string(s.substr(i, end == s.npos ? s.npos : end - i));
      i = end == s.npos ? s.size() : end;
    }
    kv[key] = value;
  }
  return kv;
}

bool parse_flag(std::string_view t, std::size_t line) {
  if (t == "T" || t == "True" || t == "true" || t == "1") return true;
  if (t == "F" || t == "False" || t == "false" || t == "0") return false;
  throw ParseError(line, "malformed pbc flag '" + std::string(t) + "'");
}

AtomicStructure parse_frame(LineReader &reader) {
  const std::size_t count_line = reader.line_number() + 1;
  const std::size_t n = parse_count(reader.next(), count_line);
  if (n == 0) throw ParseError(count_line, "atom count must be >= 1");
  if (reader.done()) throw ParseError(count_line, "missing comment line");
  const std::size_t comment_line = reader.line_number() + 1;
  const auto info = parse_comment(reader.next(), comment_line);

  AtomicStructure s;
  s.species.reserve(n);
  s.positions.reserve(n);
  std::vector<Vec3> forces;
  std::size_t columns = 0;
  for (std::size_t a = 0; a < n; ++a) {
    if (reader.done()) {
      throw ParseError(reader.line_number(),
                       "count mismatch: expected " + std::to_string(n) +
                         " atom lines, found " + std::to_string(a));
    }
    const std::size_t line = reader.line_number() + 1;
    const auto tokens = split_ws(reader.next());
    if (tokens.size() != 4 && tokens.size() != 7) {
      throw ParseError(line, "expected 'symbol x y z [fx fy fz]'");
    }
    if (columns == 0) columns = tokens.size();
    if (tokens.size() != columns) {
      throw ParseError(line, "inconsistent column count");
    }
    const auto z = atomic_number(tokens[0]);
    if (!z) {
      throw ParseError(line, "unknown element symbol '" +
                               std::string(tokens[0]) + "'");
    }
    s.species.push_back(*z);
    s.positions.push_back({parse_double(tokens[1], line),
                           parse_double(tokens[2], line),
                           parse_double(tokens[3], line)});
    if (columns == 7) {
      forces.push_back({parse_double(tokens[4], line),
                        parse_double(tokens[5], line),
                        parse_double(tokens[6], line)});
    }
  }
  if (columns == 7) s.labels.forces = std::move(forces);

  if (const auto it = info.find("Lattice"); it != info.end()) {
    const auto tokens = split_ws(it->second);
    if (tokens.size() != 9) {
      throw ParseError(comment_line, "Lattice needs 9 floats");
    }
    Cell cell;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        cell.lattice[r][c] = parse_double(tokens[r * 3 + c], comment_line);
      }
    }
    cell.periodic = true;
    if (const auto pbc = info.find("pbc"); pbc != info.end()) {
      const auto flags = split_ws(pbc->second);
      if (flags.size() != 1 && flags.size() != 3) {
        throw ParseError(comment_line, "pbc needs 1 or 3 flags");
      }
      bool any = false, all = true;
      for (auto f : flags) {
        const bool v = parse_flag(f, comment_line);
        any = any || v;
        all = all && v;
      }
      if (any != all) {
        throw ParseError(comment_line, "mixed periodicity is not supported");
      }
      cell.periodic = all;
    }
    s.cell = cell;
  }
  if (const auto it = info.find("energy"); it != info.end()) {
    s.labels.energy = parse_double(it->second, comment_line);
  }
  if (const auto it = info.find("property"); it != info.end()) {
    s.labels.property = parse_double(it->second, comment_line);
  }
  if (const auto it = info.find("components"); it != info.end()) {
    if (it->second.size() != n) {
      throw ParseError(comment_line, "components needs one tag per atom");
    }
    std::vector<ComponentTag> tags;
    for (char c : it->second) {
      if (c == 'A') {
        tags.push_back(ComponentTag::kA);
      } else if (c == 'B') {
        tags.push_back(ComponentTag::kB);
      } else {
        throw ParseError(comment_line, "component tags must be A or B");
      }
    }
    s.components = std::move(tags);
  }
  try {
    s.validate();
  } catch (const StructureError &e) {
    throw ParseError(count_line, e.what());
  }
  return s;
}

void append_double(std::string &out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

AtomicStructure parse_xyz(std::string_view text) {
  LineReader reader(text);
  AtomicStructure s = parse_frame(reader);
  if (!reader.rest_is_blank()) {
    throw ParseError(reader.line_number() + 1,
                     "count mismatch: more lines than the atom count");
  }
  return s;
}

std::vector<AtomicStructure> parse_xyz_frames(std::string_view text) {
  LineReader reader(text);
  std::vector<AtomicStructure> frames;
  while (!reader.rest_is_blank()) frames.push_back(parse_frame(reader));
  return frames;
}

std::string write_xyz(const AtomicStructure &s) {
  s.validate();
  std::string out = std::to_string(s.size()) + "\n";
  std::string comment;
  const auto sep = [&] {
    if (!comment.empty()) comment += ' ';
  };
  if (s.cell) {
    sep();
    comment += "Lattice=\"";
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (r || c) comment += ' ';
        append_double(comment, s.cell->lattice[r][c]);
      }
    }
    comment += s.cell->periodic ? "\" pbc=\"T T T\"" : "\" pbc=\"F F F\"";
  }
  if (s.labels.energy) {
    sep();
    comment += "energy=";
    append_double(comment, *s.labels.energy);
  }
  if (s.labels.property) {
    sep();
    comment += "property=";
    append_double(comment, *s.labels.property);
  }
  if (s.components) {
    sep();
    comment += "components=";
    for (ComponentTag t : *s.components) {
      comment += t == ComponentTag::kA ? 'A' : 'B';
    }
  }
  out += comment + "\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += element_symbol(s.species[i]);
    for (double x : s.positions[i]) {
      out += ' ';
      append_double(out, x);
    }
    if (s.labels.forces) {
      for (double f : (*s.labels.forces)[i]) {
        out += ' ';
        append_double(out, f);
      }
    }
    out += '\n';
  }
  return out;
}

std::string write_xyz_frames(std::span<const AtomicStructure> frames) {
  std::string out;
  for (const auto &f : frames) out += write_xyz(f);
  return out;
}

std::vector<AtomicStructure> read_xyz_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_xyz_frames(buf.str());
}

void write_xyz_file(const std::filesystem::path &path,
                    std::span<const AtomicStructure> frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << write_xyz_frames(frames);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace scd

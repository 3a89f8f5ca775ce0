#include "clickseg/cloud_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace clickseg {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double to_double(std::string_view token, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("expected a number, got '" + std::string(token) + "'", line);
  }
  return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    if (!fn(text.substr(pos, nl - pos), line_no)) return;
    if (nl == text.size()) break;
    pos = nl + 1;
  }
}

void append_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), res.ptr);
}

PointCloud make_cloud(std::vector<Vec3> pos, std::vector<Vec3> nrm) {
  if (pos.empty()) throw ParseError("no points", 0);
  try {
    return PointCloud(std::move(pos), unit_normals(std::move(nrm)));
  } catch (const GeometryError& e) {
    throw ParseError(e.what(), 0);
  }
}

}  // namespace

PointCloud parse_xyzn(std::string_view text) {
  std::vector<Vec3> pos;
  std::vector<Vec3> nrm;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') return true;
    if (tokens.size() != 6) {
      throw ParseError("expected 6 values (x y z nx ny nz), got " + std::to_string(tokens.size()), line_no);
    }
    Vec3 p(to_double(tokens[0], line_no), to_double(tokens[1], line_no), to_double(tokens[2], line_no));
    Vec3 n(to_double(tokens[3], line_no), to_double(tokens[4], line_no), to_double(tokens[5], line_no));
    if (!p.allFinite() || !n.allFinite()) throw ParseError("non-finite value", line_no);
    if (!(n.norm() > 0.0)) throw ParseError("zero-length normal", line_no);
    pos.push_back(p);
    nrm.push_back(n);
    return true;
  });
  return make_cloud(std::move(pos), std::move(nrm));
}

std::string format_xyzn(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 96);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.position(i);
    const Vec3& n = cloud.normal(i);
    for (int a = 0; a < 3; ++a) {
      append_number(out, p[a]);
      out.push_back(' ');
    }
    for (int a = 0; a < 3; ++a) {
      append_number(out, n[a]);
      out.push_back(a == 2 ? '\n' : ' ');
    }
  }
  return out;
}

PointCloud parse_ply(std::string_view text) {
  enum class Stage { Magic, Header, Body, Done };
  Stage stage = Stage::Magic;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool vertex_seen = false;
  std::vector<std::string> props;
  std::array<int, 6> col{-1, -1, -1, -1, -1, -1};
  std::vector<Vec3> pos;
  std::vector<Vec3> nrm;

  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto tokens = split_ws(line);
    switch (stage) {
      case Stage::Magic:
        if (tokens.size() != 1 || tokens[0] != "ply") throw ParseError("missing 'ply' magic", line_no);
        stage = Stage::Header;
        return true;
      case Stage::Header: {
        if (tokens.empty()) return true;
        if (tokens[0] == "format") {
          if (tokens.size() < 2 || tokens[1] != "ascii") throw ParseError("only ASCII PLY is supported", line_no);
        } else if (tokens[0] == "element") {
          if (tokens.size() != 3) throw ParseError("malformed element line", line_no);
          in_vertex = tokens[1] == "vertex";
          if (in_vertex) {
            vertex_seen = true;
            vertex_count = static_cast<std::size_t>(to_double(tokens[2], line_no));
          } else if (!vertex_seen) {
            throw ParseError("vertex element must come first", line_no);
          }
        } else if (tokens[0] == "property") {
          if (in_vertex) {
            if (tokens.size() != 3) throw ParseError("unsupported vertex property declaration", line_no);
            props.emplace_back(tokens[2]);
          }
        } else if (tokens[0] == "end_header") {
          static const std::array<const char*, 6> names{"x", "y", "z", "nx", "ny", "nz"};
          for (std::size_t c = 0; c < names.size(); ++c) {
            for (std::size_t p = 0; p < props.size(); ++p) {
              if (props[p] == names[c]) col[c] = static_cast<int>(p);
            }
            if (col[c] < 0) throw ParseError(std::string("vertex property '") + names[c] + "' missing", line_no);
          }
          stage = vertex_count > 0 ? Stage::Body : Stage::Done;
        } else if (tokens[0] != "comment" && tokens[0] != "obj_info") {
          throw ParseError("unexpected header line", line_no);
        }
        return true;
      }
      case Stage::Body: {
        if (tokens.empty()) return true;
        if (tokens.size() < props.size()) {
          throw ParseError("expected " + std::to_string(props.size()) + " vertex values, got " +
                               std::to_string(tokens.size()),
                           line_no);
        }
        std::array<double, 6> v{};
        for (std::size_t c = 0; c < 6; ++c) v[c] = to_double(tokens[static_cast<std::size_t>(col[c])], line_no);
        Vec3 n(v[3], v[4], v[5]);
        if (!(n.norm() > 0.0)) throw ParseError("zero-length normal", line_no);
        pos.emplace_back(v[0], v[1], v[2]);
        nrm.push_back(n);
        if (pos.size() == vertex_count) stage = Stage::Done;
        return true;
      }
      case Stage::Done:
        return false;
    }
    return true;
  });
  if (stage == Stage::Magic || stage == Stage::Header) throw ParseError("incomplete PLY header", 0);
  if (pos.size() != vertex_count) {
    throw ParseError("PLY declares " + std::to_string(vertex_count) + " vertices but has " +
                         std::to_string(pos.size()),
                     0);
  }
  return make_cloud(std::move(pos), std::move(nrm));
}

std::string format_ply(const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\n"
                    "property double nx\nproperty double ny\nproperty double nz\nend_header\n";
  return out + format_xyzn(cloud);
}

PointCloud parse_cloud(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\n' || text[i] == '\r' || text[i] == '\t')) ++i;
  if (text.substr(i, 3) == "ply") return parse_ply(text);
  return parse_xyzn(text);
}

std::vector<int> parse_labels(std::string_view text) {
  std::vector<int> labels;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) return true;
    if (tokens.size() != 1) throw ParseError("expected one integer label", line_no);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), v);
    if (ec != std::errc() || ptr != tokens[0].data() + tokens[0].size()) {
      throw ParseError("expected an integer, got '" + std::string(tokens[0]) + "'", line_no);
    }
    labels.push_back(v);
    return true;
  });
  return labels;
}

std::string format_labels(const std::vector<int>& labels) {
  std::string out;
  out.reserve(labels.size() * 3);
  for (int l : labels) {
    out += std::to_string(l);
    out.push_back('\n');
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

PointCloud load_cloud(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return path.extension() == ".ply" ? parse_ply(text) : parse_cloud(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  write_file_atomic(path, path.extension() == ".ply" ? format_ply(cloud) : format_xyzn(cloud));
}

std::vector<int> load_labels(const std::filesystem::path& path) { return parse_labels(read_file(path)); }

void save_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  write_file_atomic(path, format_labels(labels));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return s;
}

}  // namespace clickseg

#include "hiermesh/obj_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "hiermesh/error.hpp"

namespace hiermesh {
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

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": " + what);
}

double parse_real(std::string_view token, std::size_t line_no) {
  // std::from_chars for double is available in libstdc++ 11.
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail(line_no, "invalid number '" + std::string(token) + "'");
  }
  return value;
}

long parse_index(std::string_view token, std::size_t line_no) {
  const std::size_t slash = token.find('/');
  const std::string_view head = token.substr(0, slash);
  long value = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (head.empty() || ec != std::errc() || ptr != head.data() + head.size() || value == 0) {
    fail(line_no, "invalid face index '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

IndexedMesh parse_obj(std::string_view text) {
  IndexedMesh mesh;
  std::vector<std::vector<long>> polygons;
  std::vector<std::size_t> polygon_lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split_ws(line);
    if (tokens.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (tokens[0] == "v") {
      if (tokens.size() < 4) fail(line_no, "vertex needs three coordinates");
      mesh.vertices.emplace_back(parse_real(tokens[1], line_no), parse_real(tokens[2], line_no),
                                 parse_real(tokens[3], line_no));
    } else if (tokens[0] == "f") {
      if (tokens.size() < 4) fail(line_no, "face needs at least three indices");
      std::vector<long> poly;
      for (std::size_t k = 1; k < tokens.size(); ++k) {
        long idx = parse_index(tokens[k], line_no);
        // Negative indices are relative to the vertices read so far.
        if (idx < 0) idx = static_cast<long>(mesh.vertices.size()) + idx + 1;
        poly.push_back(idx - 1);
      }
      polygons.push_back(std::move(poly));
      polygon_lines.push_back(line_no);
    }
    if (end == text.size()) break;
  }

  const long nverts = static_cast<long>(mesh.vertices.size());
  for (std::size_t p = 0; p < polygons.size(); ++p) {
    const auto& poly = polygons[p];
    for (long idx : poly) {
      HIERMESH_CHECK(idx >= 0 && idx < nverts, ErrorKind::kStructural,
                     "line " + std::to_string(polygon_lines[p]) + ": face index " + std::to_string(idx + 1) +
                         " out of range (" + std::to_string(nverts) + " vertices)");
    }
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      mesh.faces.push_back({static_cast<int>(poly[0]), static_cast<int>(poly[k]), static_cast<int>(poly[k + 1])});
    }
  }
  return mesh;
}

IndexedMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_obj(buffer.str());
}

void write_obj(std::ostream& out, const IndexedMesh& mesh) {
  char line[128];
  for (const Point3& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f\n", v.x(), v.y(), v.z());
    out << line;
  }
  for (const Face& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

std::string to_obj_string(const IndexedMesh& mesh) {
  std::ostringstream out;
  write_obj(out, mesh);
  return out.str();
}

void save_obj(const std::filesystem::path& path, const IndexedMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  HIERMESH_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  write_obj(out, mesh);
}

}  // namespace hiermesh

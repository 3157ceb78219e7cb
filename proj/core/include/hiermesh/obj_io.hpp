#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "hiermesh/mesh.hpp"

namespace hiermesh {

// ASCII OBJ subset: `v` and `f` records. Polygons are fan-triangulated,
// `a/b/c` index groups keep the position index, normals and UVs are ignored.
IndexedMesh parse_obj(std::string_view text);
IndexedMesh load_obj(const std::filesystem::path& path);

// Writes 1-based faces and 6-decimal coordinates.
void write_obj(std::ostream& out, const IndexedMesh& mesh);
std::string to_obj_string(const IndexedMesh& mesh);
void save_obj(const std::filesystem::path& path, const IndexedMesh& mesh);

}  // namespace hiermesh

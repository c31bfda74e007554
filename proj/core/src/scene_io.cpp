#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "lidarsdf/errors.hpp"
#include "lidarsdf/io.hpp"
#include "lidarsdf/scenegen.hpp"

namespace lidarsdf {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
};

std::size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw FormatError("unsupported PLY property type '" + t + "'");
}

template <typename T>
T read_raw(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_binary(const char* p, const std::string& t) {
  if (t == "char" || t == "int8") return read_raw<std::int8_t>(p);
  if (t == "uchar" || t == "uint8") return read_raw<std::uint8_t>(p);
  if (t == "short" || t == "int16") return read_raw<std::int16_t>(p);
  if (t == "ushort" || t == "uint16") return read_raw<std::uint16_t>(p);
  if (t == "int" || t == "int32") return read_raw<std::int32_t>(p);
  if (t == "uint" || t == "uint32") return read_raw<std::uint32_t>(p);
  if (t == "float" || t == "float32") return read_raw<float>(p);
  return read_raw<double>(p);
}

Scene assemble(std::vector<std::array<double, 4>> rows) {
  Scene s;
  s.points.reserve(rows.size());
  s.sensor_index.reserve(rows.size());
  for (const auto& r : rows) {
    s.points.emplace_back(r[0], r[1], r[2]);
    s.sensor_index.push_back(static_cast<int>(r[3]));
  }
  return s;
}

}  // namespace

std::string scene_to_ply(const Scene& scene, bool binary) {
  std::ostringstream os;
  os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
     << "element vertex " << scene.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\nproperty int sensor_id\nend_header\n";
  if (binary) {
    for (std::size_t i = 0; i < scene.size(); ++i) {
      const double xyz[3] = {scene.points[i].x(), scene.points[i].y(), scene.points[i].z()};
      const std::int32_t id = scene.sensor_index[i];
      os.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      os.write(reinterpret_cast<const char*>(&id), sizeof(id));
    }
  } else {
    os.precision(17);
    for (std::size_t i = 0; i < scene.size(); ++i) {
      os << scene.points[i].x() << ' ' << scene.points[i].y() << ' ' << scene.points[i].z() << ' '
         << scene.sensor_index[i] << '\n';
    }
  }
  return os.str();
}

Scene scene_from_ply(const std::string& bytes) {
  std::istringstream is(bytes);
  std::string line;
  if (!std::getline(is, line) || line != "ply") throw FormatError("not a PLY file");
  bool binary = false, in_vertex = false, seen_vertex = false;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw FormatError("unsupported PLY format '" + fmt + "'");
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) throw FormatError("duplicate vertex element");
        if (props.size() || count) throw FormatError("vertex must be the first PLY element");
        ls >> count;
        seen_vertex = true;
      }
    } else if (word == "property") {
      std::string type, name;
      ls >> type;
      if (type == "list") throw FormatError("list properties are not supported in the vertex element");
      ls >> name;
      if (in_vertex) props.push_back({name, type});
    } else if (word == "end_header") {
      break;
    } else if (word != "comment" && word != "obj_info" && !word.empty()) {
      throw FormatError("unexpected PLY header line '" + line + "'");
    }
  }
  if (!seen_vertex) throw FormatError("PLY file has no vertex element");
  int ix = -1, iy = -1, iz = -1, is_id = -1;
  for (std::size_t k = 0; k < props.size(); ++k) {
    if (props[k].name == "x") ix = static_cast<int>(k);
    if (props[k].name == "y") iy = static_cast<int>(k);
    if (props[k].name == "z") iz = static_cast<int>(k);
    if (props[k].name == "sensor_id") is_id = static_cast<int>(k);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("PLY vertex lacks x, y or z");

  std::vector<std::array<double, 4>> rows(count);
  std::vector<double> values(props.size());
  if (binary) {
    std::size_t stride = 0;
    for (const auto& p : props) stride += type_size(p.type);
    const std::size_t offset = static_cast<std::size_t>(is.tellg());
    if (bytes.size() < offset + stride * count) throw FormatError("PLY body is truncated");
    const char* base = bytes.data() + offset;
    for (std::size_t i = 0; i < count; ++i) {
      const char* p = base + i * stride;
      for (std::size_t k = 0; k < props.size(); ++k) {
        values[k] = read_binary(p, props[k].type);
        p += type_size(props[k].type);
      }
      rows[i] = {values[ix], values[iy], values[iz], is_id >= 0 ? values[is_id] : 0.0};
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < props.size(); ++k) {
        std::string tok;
        if (!(is >> tok)) throw FormatError("PLY body is truncated");
        values[k] = std::stod(tok);
      }
      rows[i] = {values[ix], values[iy], values[iz], is_id >= 0 ? values[is_id] : 0.0};
    }
  }
  return assemble(std::move(rows));
}

std::string scene_to_csv(const Scene& scene) {
  std::ostringstream os;
  os.precision(17);
  os << "x,y,z,sensor_id\n";
  for (std::size_t i = 0; i < scene.size(); ++i) {
    os << scene.points[i].x() << ',' << scene.points[i].y() << ',' << scene.points[i].z() << ','
       << scene.sensor_index[i] << '\n';
  }
  return os.str();
}

Scene scene_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty CSV scene");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,z,sensor_id") throw FormatError("CSV scene header must be x,y,z,sensor_id");
  std::vector<std::array<double, 4>> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::array<double, 4> r{};
    std::istringstream ls(line);
    std::string cell;
    for (int k = 0; k < 4; ++k) {
      if (!std::getline(ls, cell, ',')) throw FormatError("CSV row has fewer than 4 columns: " + line);
      try {
        r[k] = std::stod(cell);
      } catch (const std::exception&) {
        throw FormatError("bad CSV value '" + cell + "'");
      }
    }
    rows.push_back(r);
  }
  return assemble(std::move(rows));
}

std::string sensors_to_json(const std::vector<Vec3>& sensors) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : sensors) arr.push_back({s.x(), s.y(), s.z()});
  return nlohmann::json{{"format_version", kFormatVersion}, {"sensors", arr}}.dump(2) + "\n";
}

std::vector<Vec3> sensors_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    std::vector<Vec3> out;
    for (const auto& s : doc.at("sensors")) {
      const auto v = s.get<std::vector<double>>();
      if (v.size() != 3) throw FormatError("sensor entries must have three coordinates");
      out.emplace_back(v[0], v[1], v[2]);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad sensors file: ") + e.what());
  }
}

std::filesystem::path sensors_sidecar_path(const std::filesystem::path& scene_path) {
  std::filesystem::path p = scene_path;
  p.replace_extension(".sensors.json");
  return p;
}

void save_scene(const std::filesystem::path& path, const Scene& scene, SceneFormat format) {
  const std::string body = format == SceneFormat::Csv ? scene_to_csv(scene)
                                                      : scene_to_ply(scene, format == SceneFormat::PlyBinary);
  write_text_file(path, body);
  write_text_file(sensors_sidecar_path(path), sensors_to_json(scene.sensors));
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  save_scene(path, scene, path.extension() == ".csv" ? SceneFormat::Csv : SceneFormat::PlyBinary);
}

Scene load_scene(const std::filesystem::path& path) {
  const std::string body = read_text_file(path);
  Scene scene = path.extension() == ".csv" ? scene_from_csv(body) : scene_from_ply(body);
  scene.sensors = sensors_from_json(read_text_file(sensors_sidecar_path(path)));
  scene.validate();
  return scene;
}

}  // namespace lidarsdf

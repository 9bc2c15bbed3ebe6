// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

// File formats: PFM, 8-bit PNG, PLY (Gaussians, meshes, point clouds), OBJ and
// the JSON scene manifest. Needs libpng and the vendored json.hpp.

#pragma once

#include "orthofuse/camera.hpp"
#include "orthofuse/gaussians.hpp"
#include "orthofuse/mesh.hpp"

#include <png.h>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace orthofuse {

/// Unreadable, missing or ill-formed file; the message names the file.
class IoError : public Error {
public:
    IoError(const std::filesystem::path &path, const std::string &what)
        : Error(path.string() + ": " + what), path_(path) {}
    const std::filesystem::path &path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace detail {

inline std::ofstream open_out(const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(path, "cannot open for writing");
    }
    return out;
}

inline std::ifstream open_in(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path)) {
        throw IoError(path, "file does not exist");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open for reading");
    }
    return in;
}

template <typename T>
void put(std::ostream &out, T v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get(std::istream &in, const std::filesystem::path &path) {
    T v;
    if (!in.read(reinterpret_cast<char *>(&v), sizeof(T))) {
        throw IoError(path, "unexpected end of file");
    }
    return v;
}

inline std::string read_token(std::istream &in, const std::filesystem::path &path) {
    std::string tok;
    if (!(in >> tok)) {
        throw IoError(path, "unexpected end of header");
    }
    return tok;
}

} // namespace detail

// ---------------------------------------------------------------------------
// PFM: "Pf" (1 channel) or "PF" (3 channels), little-endian float32, bottom row first.

inline void write_pfm(const std::filesystem::path &path, const ImageD &img) {
    require(img.channels() == 1 || img.channels() == 3, "PFM holds 1 or 3 channels");
    auto out = detail::open_out(path);
    out << (img.channels() == 3 ? "PF" : "Pf") << '\n' << img.width() << ' ' << img.height() << '\n' << "-1.0\n";
    for (int v = img.height() - 1; v >= 0; --v) {
        for (int u = 0; u < img.width(); ++u) {
            for (int c = 0; c < img.channels(); ++c) {
                detail::put(out, static_cast<float>(img(c, v, u)));
            }
        }
    }
    if (!out) {
        throw IoError(path, "write failed");
    }
}

inline ImageD read_pfm(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    const std::string magic = detail::read_token(in, path);
    int channels = 0;
    if (magic == "PF") {
        channels = 3;
    } else if (magic == "Pf") {
        channels = 1;
    } else {
        throw IoError(path, "not a PFM file (magic '" + magic + "')");
    }
    int w = 0;
    int h = 0;
    double scale = 0.0;
    if (!(in >> w >> h >> scale) || w <= 0 || h <= 0 || scale == 0.0) {
        throw IoError(path, "bad PFM header (width/height/scale)");
    }
    if (scale > 0.0) {
        throw IoError(path, "big-endian PFM is not supported (scale field)");
    }
    in.get();
    ImageD img(channels, h, w);
    for (int v = h - 1; v >= 0; --v) {
        for (int u = 0; u < w; ++u) {
            for (int c = 0; c < channels; ++c) {
                img(c, v, u) = detail::get<float>(in, path);
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// PNG, 8 bits per channel, gray or RGB; values in [0, 1] are rounded to 1/255.

inline std::uint8_t to_byte(double x) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
}

inline void write_png(const std::filesystem::path &path, const ImageD &img) {
    require(img.channels() == 1 || img.channels() == 3, "PNG export holds 1 or 3 channels");
    FILE *fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) {
        throw IoError(path, "cannot open for writing");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError(path, "PNG encoding failed");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width(), img.height(), 8, img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int v = 0; v < img.height(); ++v) {
        for (int u = 0; u < img.width(); ++u) {
            for (int c = 0; c < img.channels(); ++c) {
                row[static_cast<std::size_t>(u) * img.channels() + c] = to_byte(img(c, v, u));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

/// Reads any 8-bit PNG as RGB (gray is replicated, alpha dropped).
inline ImageD read_png(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path)) {
        throw IoError(path, "file does not exist");
    }
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw IoError(path, std::string("cannot decode PNG: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(path, std::string("cannot decode PNG: ") + image.message);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    ImageD img(3, h, w);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            for (int c = 0; c < 3; ++c) {
                img(c, v, u) = buf[(static_cast<std::size_t>(v) * w + u) * 3 + c] / 255.0;
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// PLY

namespace detail {

struct PlyProperty {
    std::string name;
    std::string type;      // scalar type, or the item type for lists
    std::string list_size; // empty for scalars
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;

    int find(const std::string &prop) const {
        for (std::size_t i = 0; i < properties.size(); ++i) {
            if (properties[i].name == prop) {
                return static_cast<int>(i);
            }
        }
        return -1;
    }
};

struct PlyHeader {
    bool binary = false;
    std::vector<PlyElement> elements;
};

inline PlyHeader read_ply_header(std::istream &in, const std::filesystem::path &path) {
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
        throw IoError(path, "not a PLY file (missing 'ply' magic)");
    }
    PlyHeader h;
    bool have_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                h.binary = false;
            } else if (fmt == "binary_little_endian") {
                h.binary = true;
            } else {
                throw IoError(path, "unsupported PLY format '" + fmt + "'");
            }
            have_format = true;
        } else if (key == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            h.elements.push_back(e);
        } else if (key == "property") {
            if (h.elements.empty()) {
                throw IoError(path, "PLY property before any element");
            }
            PlyProperty p;
            std::string type;
            ls >> type;
            if (type == "list") {
                ls >> p.list_size >> p.type >> p.name;
            } else {
                p.type = type;
                ls >> p.name;
            }
            h.elements.back().properties.push_back(p);
        } else if (key == "end_header") {
            if (!have_format) {
                throw IoError(path, "PLY header has no format line");
            }
            return h;
        }
    }
    throw IoError(path, "PLY header is not terminated by end_header");
}

inline double read_ply_scalar(std::istream &in, const std::string &type, bool binary,
                              const std::filesystem::path &path) {
    if (!binary) {
        double v = 0.0;
        if (!(in >> v)) {
            throw IoError(path, "malformed ASCII PLY body");
        }
        return v;
    }
    if (type == "char" || type == "int8") return get<std::int8_t>(in, path);
    if (type == "uchar" || type == "uint8") return get<std::uint8_t>(in, path);
    if (type == "short" || type == "int16") return get<std::int16_t>(in, path);
    if (type == "ushort" || type == "uint16") return get<std::uint16_t>(in, path);
    if (type == "int" || type == "int32") return get<std::int32_t>(in, path);
    if (type == "uint" || type == "uint32") return get<std::uint32_t>(in, path);
    if (type == "float" || type == "float32") return get<float>(in, path);
    if (type == "double" || type == "float64") return get<double>(in, path);
    throw IoError(path, "unsupported PLY property type '" + type + "'");
}

// Reads every element; scalars go to `values`, list items to `lists`.
struct PlyData {
    std::vector<std::vector<double>> values;             // per row, per scalar property slot
    std::vector<std::vector<std::vector<double>>> lists; // per row, per property
};

inline PlyData read_ply_element(std::istream &in, const PlyElement &e, bool binary, const std::filesystem::path &path) {
    PlyData d;
    d.values.resize(e.count);
    d.lists.resize(e.count);
    for (std::size_t r = 0; r < e.count; ++r) {
        d.values[r].resize(e.properties.size(), 0.0);
        d.lists[r].resize(e.properties.size());
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
            const PlyProperty &prop = e.properties[p];
            if (prop.list_size.empty()) {
                d.values[r][p] = read_ply_scalar(in, prop.type, binary, path);
            } else {
                const double n = read_ply_scalar(in, prop.list_size, binary, path);
                if (n < 0 || n > 1e6) {
                    throw IoError(path, "implausible PLY list length in element '" + e.name + "'");
                }
                d.lists[r][p].resize(static_cast<std::size_t>(n));
                for (auto &x : d.lists[r][p]) {
                    x = read_ply_scalar(in, prop.type, binary, path);
                }
            }
        }
    }
    return d;
}

inline int require_property(const PlyElement &e, const std::string &name, const std::filesystem::path &path) {
    const int idx = e.find(name);
    if (idx < 0) {
        throw IoError(path, "PLY element '" + e.name + "' lacks property '" + name + "'");
    }
    return idx;
}

} // namespace detail

inline const std::vector<std::string> &gaussian_ply_properties() {
    static const std::vector<std::string> names = {"x",       "y",       "z",       "red",   "green", "blue",
                                                   "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
                                                   "rot_2",   "rot_3"};
    return names;
}

/// Binary little-endian PLY, one vertex per Gaussian, all properties float64
/// with activated values (opacity in [0, 1], world scale, unit (w,x,y,z) quaternion).
inline void write_gaussians_ply(const std::filesystem::path &path, const GaussianCloud &cloud) {
    auto out = detail::open_out(path);
    out << "ply\nformat binary_little_endian 1.0\ncomment orthofuse gaussian cloud\n";
    out << "element vertex " << cloud.size() << '\n';
    for (const std::string &n : gaussian_ply_properties()) {
        out << "property double " << n << '\n';
    }
    out << "end_header\n";
    for (const Gaussian3D &g : cloud.gaussians) {
        for (int k = 0; k < 3; ++k) detail::put(out, g.center[k]);
        for (int k = 0; k < 3; ++k) detail::put(out, g.color[k]);
        detail::put(out, g.opacity);
        for (int k = 0; k < 3; ++k) detail::put(out, g.scale[k]);
        for (int k = 0; k < 4; ++k) detail::put(out, g.rotation[k]);
    }
    if (!out) {
        throw IoError(path, "write failed");
    }
}

inline GaussianCloud read_gaussians_ply(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    const detail::PlyHeader h = detail::read_ply_header(in, path);
    GaussianCloud cloud;
    for (const detail::PlyElement &e : h.elements) {
        const detail::PlyData d = detail::read_ply_element(in, e, h.binary, path);
        if (e.name != "vertex") {
            continue;
        }
        std::vector<int> idx;
        for (const std::string &n : gaussian_ply_properties()) {
            idx.push_back(detail::require_property(e, n, path));
        }
        for (const auto &row : d.values) {
            Gaussian3D g;
            g.center = {row[idx[0]], row[idx[1]], row[idx[2]]};
            g.color = {row[idx[3]], row[idx[4]], row[idx[5]]};
            g.opacity = row[idx[6]];
            g.scale = {row[idx[7]], row[idx[8]], row[idx[9]]};
            g.rotation = {row[idx[10]], row[idx[11]], row[idx[12]], row[idx[13]]};
            if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
                throw IoError(path, "field 'opacity' outside [0, 1]");
            }
            if (!(g.scale.minCoeff() > 0.0)) {
                throw IoError(path, "field 'scale' must be positive");
            }
            cloud.gaussians.push_back(g);
        }
    }
    return cloud;
}

/// Binary little-endian PLY: double positions, optional uchar colors, int faces.
inline void write_mesh_ply(const std::filesystem::path &path, const TriMesh &mesh) {
    mesh.validate();
    auto out = detail::open_out(path);
    const bool colored = !mesh.vertex_colors.empty();
    out << "ply\nformat binary_little_endian 1.0\ncomment orthofuse mesh\n";
    out << "element vertex " << mesh.vertices.size() << '\n';
    out << "property double x\nproperty double y\nproperty double z\n";
    if (colored) {
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    out << "element face " << mesh.faces.size() << '\n';
    out << "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        for (int k = 0; k < 3; ++k) detail::put(out, mesh.vertices[i][k]);
        if (colored) {
            for (int k = 0; k < 3; ++k) detail::put(out, to_byte(mesh.vertex_colors[i][k]));
        }
    }
    for (const Face &f : mesh.faces) {
        detail::put<std::uint8_t>(out, 3);
        for (int k = 0; k < 3; ++k) detail::put(out, static_cast<std::int32_t>(f[k]));
    }
    if (!out) {
        throw IoError(path, "write failed");
    }
}

namespace detail {

inline void add_polygon(TriMesh &m, const std::vector<double> &idx, const std::filesystem::path &path) {
    if (idx.size() < 3) {
        throw IoError(path, "face with fewer than 3 vertices");
    }
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        m.faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[k]),
                           static_cast<std::uint32_t>(idx[k + 1])});
    }
}

inline void check_mesh(const TriMesh &m, const std::filesystem::path &path) {
    for (const Face &f : m.faces) {
        for (std::uint32_t i : f) {
            if (i >= m.vertices.size()) {
                throw IoError(path, "face index " + std::to_string(i) + " out of range");
            }
        }
    }
}

} // namespace detail

/// Reads ASCII or binary little-endian PLY meshes; polygons are fan-triangulated
/// and integer colors are scaled by 1/255.
inline TriMesh read_mesh_ply(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    const detail::PlyHeader h = detail::read_ply_header(in, path);
    TriMesh m;
    for (const detail::PlyElement &e : h.elements) {
        const detail::PlyData d = detail::read_ply_element(in, e, h.binary, path);
        if (e.name == "vertex") {
            const int x = detail::require_property(e, "x", path);
            const int y = detail::require_property(e, "y", path);
            const int z = detail::require_property(e, "z", path);
            const int r = e.find("red");
            const int g = e.find("green");
            const int b = e.find("blue");
            const bool colored = r >= 0 && g >= 0 && b >= 0;
            const double cs = colored && (e.properties[r].type == "float" || e.properties[r].type == "double")
                                  ? 1.0
                                  : 1.0 / 255.0;
            for (const auto &row : d.values) {
                m.vertices.emplace_back(row[x], row[y], row[z]);
                if (colored) {
                    m.vertex_colors.emplace_back(row[r] * cs, row[g] * cs, row[b] * cs);
                }
            }
        } else if (e.name == "face") {
            int p = e.find("vertex_indices");
            if (p < 0) {
                p = detail::require_property(e, "vertex_index", path);
            }
            for (const auto &row : d.lists) {
                detail::add_polygon(m, row[p], path);
            }
        }
    }
    detail::check_mesh(m, path);
    return m;
}

/// ASCII OBJ with "v x y z r g b" lines when the mesh has vertex colors.
inline void write_mesh_obj(const std::filesystem::path &path, const TriMesh &mesh) {
    mesh.validate();
    auto out = detail::open_out(path);
    out << "# orthofuse mesh\n";
    char buf[160];
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3 &v = mesh.vertices[i];
        if (mesh.vertex_colors.empty()) {
            std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        } else {
            const Vec3 &c = mesh.vertex_colors[i];
            std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g %.9g %.9g %.9g\n", v.x(), v.y(), v.z(), c.x(), c.y(),
                          c.z());
        }
        out << buf;
    }
    for (const Face &f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    if (!out) {
        throw IoError(path, "write failed");
    }
}

inline TriMesh read_mesh_obj(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    TriMesh m;
    std::string line;
    std::size_t line_no = 0;
    bool any_color = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) {
                throw IoError(path, "line " + std::to_string(line_no) + ": malformed vertex");
            }
            m.vertices.emplace_back(x, y, z);
            double r, g, b;
            if (ls >> r >> g >> b) {
                m.vertex_colors.resize(m.vertices.size() - 1, Vec3::Zero());
                m.vertex_colors.emplace_back(r, g, b);
                any_color = true;
            }
        } else if (key == "f") {
            std::vector<double> idx;
            std::string tok;
            while (ls >> tok) {
                const long i = std::strtol(tok.c_str(), nullptr, 10);
                if (i == 0) {
                    throw IoError(path, "line " + std::to_string(line_no) + ": malformed face index '" + tok + "'");
                }
                idx.push_back(static_cast<double>(i > 0 ? i - 1 : static_cast<long>(m.vertices.size()) + i));
            }
            detail::add_polygon(m, idx, path);
        }
    }
    if (any_color) {
        m.vertex_colors.resize(m.vertices.size(), Vec3::Zero());
    }
    detail::check_mesh(m, path);
    return m;
}

namespace detail {

inline bool is_obj(const std::filesystem::path &path) {
    const std::string ext = path.extension().string();
    if (ext != ".obj" && ext != ".ply") {
        throw IoError(path, "unsupported mesh format (expected .ply or .obj)");
    }
    return ext == ".obj";
}

} // namespace detail

inline void write_mesh(const std::filesystem::path &path, const TriMesh &mesh) {
    if (detail::is_obj(path)) {
        write_mesh_obj(path, mesh);
    } else {
        write_mesh_ply(path, mesh);
    }
}

inline TriMesh read_mesh(const std::filesystem::path &path) {
    return detail::is_obj(path) ? read_mesh_obj(path) : read_mesh_ply(path);
}

/// Binary little-endian PLY with double positions and normals and uchar colors.
inline void write_point_cloud_ply(const std::filesystem::path &path, const OrientedPointCloud &cloud) {
    auto out = detail::open_out(path);
    out << "ply\nformat binary_little_endian 1.0\ncomment orthofuse oriented points\n";
    out << "element vertex " << cloud.size() << '\n';
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) detail::put(out, cloud.positions[i][k]);
        for (int k = 0; k < 3; ++k) detail::put(out, cloud.normals[i][k]);
        for (int k = 0; k < 3; ++k) detail::put(out, to_byte(cloud.colors[i][k]));
    }
    if (!out) {
        throw IoError(path, "write failed");
    }
}

// ---------------------------------------------------------------------------
// Scene manifest

inline constexpr const char *kManifestVersion = "orthofuse-manifest/1";

struct ManifestView {
    std::string name;
    OrthoCamera camera;
    std::string rgb;       // PNG
    std::string depth;     // PFM, 1 channel
    std::string opacity;   // PFM, 1 channel, pre-sigmoid
    std::string scale;     // PFM, 3 channels, pre-activation
    std::string quat_w;    // PFM, 1 channel
    std::string quat_xyz;  // PFM, 3 channels
};

struct SceneManifest {
    std::string version = kManifestVersion;
    std::string scene;
    std::string provenance;
    std::vector<ManifestView> views;
};

inline nlohmann::ordered_json manifest_to_json(const SceneManifest &m) {
    nlohmann::ordered_json j;
    j["version"] = m.version;
    j["scene"] = m.scene;
    j["provenance"] = m.provenance;
    j["views"] = nlohmann::ordered_json::array();
    for (const ManifestView &v : m.views) {
        nlohmann::ordered_json jv;
        jv["name"] = v.name;
        std::vector<double> rot;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                rot.push_back(v.camera.rotation()(r, c));
            }
        }
        jv["rotation"] = rot;
        jv["plane_distance"] = v.camera.plane_distance();
        jv["half_extent"] = v.camera.half_extent();
        jv["resolution"] = v.camera.width();
        jv["files"] = {{"rgb", v.rgb},         {"depth", v.depth},   {"opacity", v.opacity},
                       {"scale", v.scale},     {"quat_w", v.quat_w}, {"quat_xyz", v.quat_xyz}};
        j["views"].push_back(jv);
    }
    return j;
}

inline void write_manifest(const std::filesystem::path &path, const SceneManifest &m) {
    auto out = detail::open_out(path);
    out << manifest_to_json(m).dump(2) << '\n';
    if (!out) {
        throw IoError(path, "write failed");
    }
}

inline SceneManifest read_manifest(const std::filesystem::path &path) {
    auto in = detail::open_in(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw IoError(path, std::string("invalid JSON: ") + e.what());
    }
    const auto field = [&](const nlohmann::json &obj, const std::string &key, const std::string &where) {
        if (!obj.is_object() || !obj.contains(key)) {
            throw IoError(path, "missing field '" + where + key + "'");
        }
        return obj.at(key);
    };
    SceneManifest m;
    try {
        m.version = field(j, "version", "").get<std::string>();
        if (m.version != kManifestVersion) {
            throw IoError(path, "field 'version': unrecognized tag '" + m.version + "'");
        }
        m.scene = j.value("scene", "");
        m.provenance = j.value("provenance", "");
        const nlohmann::json views = field(j, "views", "");
        if (!views.is_array() || views.empty()) {
            throw IoError(path, "field 'views' must be a non-empty array");
        }
        for (std::size_t i = 0; i < views.size(); ++i) {
            const std::string where = "views[" + std::to_string(i) + "].";
            const nlohmann::json &jv = views[i];
            const std::string name = field(jv, "name", where).get<std::string>();
            const auto rot = field(jv, "rotation", where).get<std::vector<double>>();
            if (rot.size() != 9) {
                throw IoError(path, "field '" + where + "rotation' must hold 9 numbers");
            }
            Mat3 r;
            for (int k = 0; k < 9; ++k) {
                r(k / 3, k % 3) = rot[k];
            }
            const double pd = field(jv, "plane_distance", where).get<double>();
            const double he = field(jv, "half_extent", where).get<double>();
            const int res = field(jv, "resolution", where).get<int>();
            const ViewId id = view_id_from_string(name);
            std::optional<OrthoCamera> cam;
            try {
                cam.emplace(id, r, pd, he, res, res);
            } catch (const Error &e) {
                throw IoError(path, "view '" + where + "': " + e.what());
            }
            ManifestView v{name, *cam};
            const nlohmann::json files = field(jv, "files", where);
            v.rgb = field(files, "rgb", where + "files.").get<std::string>();
            v.depth = field(files, "depth", where + "files.").get<std::string>();
            v.opacity = field(files, "opacity", where + "files.").get<std::string>();
            v.scale = field(files, "scale", where + "files.").get<std::string>();
            v.quat_w = field(files, "quat_w", where + "files.").get<std::string>();
            v.quat_xyz = field(files, "quat_xyz", where + "files.").get<std::string>();
            m.views.push_back(std::move(v));
        }
    } catch (const nlohmann::json::exception &e) {
        throw IoError(path, std::string("ill-typed field: ") + e.what());
    }
    return m;
}

/// Writes every view's maps next to the manifest and the manifest itself.
inline void write_viewset(const std::filesystem::path &dir, const ViewSet &views, const std::string &scene,
                          const std::vector<std::string> &names, const std::string &provenance = "") {
    views.validate();
    require(names.size() == views.size(), "one name per view is required");
    std::filesystem::create_directories(dir);
    SceneManifest m;
    m.scene = scene;
    m.provenance = provenance;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const ViewMaps &vm = views.maps[i];
        ManifestView v{names[i], views.cameras[i]};
        const std::string stem = std::to_string(i) + "_" + names[i];
        v.rgb = stem + "_rgb.png";
        v.depth = stem + "_depth.pfm";
        v.opacity = stem + "_opacity.pfm";
        v.scale = stem + "_scale.pfm";
        v.quat_w = stem + "_quat_w.pfm";
        v.quat_xyz = stem + "_quat_xyz.pfm";
        write_png(dir / v.rgb, vm.rgb);
        write_pfm(dir / v.depth, vm.depth);
        write_pfm(dir / v.opacity, vm.opacity_raw);
        write_pfm(dir / v.scale, vm.scale_raw);
        ImageD qw(1, vm.height(), vm.width());
        ImageD qxyz(3, vm.height(), vm.width());
        for (int r = 0; r < vm.height(); ++r) {
            for (int c = 0; c < vm.width(); ++c) {
                qw(0, r, c) = vm.quat_raw(0, r, c);
                for (int k = 0; k < 3; ++k) {
                    qxyz(k, r, c) = vm.quat_raw(k + 1, r, c);
                }
            }
        }
        write_pfm(dir / v.quat_w, qw);
        write_pfm(dir / v.quat_xyz, qxyz);
        m.views.push_back(std::move(v));
    }
    write_manifest(dir / "manifest.json", m);
}

/// Loads a manifest (a file, or a directory holding manifest.json) and its maps.
inline ViewSet read_viewset(const std::filesystem::path &manifest_path, SceneManifest *manifest_out = nullptr) {
    std::filesystem::path path = manifest_path;
    if (std::filesystem::is_directory(path)) {
        path /= "manifest.json";
    } else if (!std::filesystem::exists(path) && path.extension().empty()) {
        std::filesystem::path with_ext = path;
        with_ext += ".json";
        if (std::filesystem::exists(with_ext)) {
            path = with_ext;
        }
    }
    const SceneManifest m = read_manifest(path);
    const std::filesystem::path dir = path.parent_path();
    ViewSet views;
    for (const ManifestView &v : m.views) {
        const int res = v.camera.width();
        const auto load = [&](const std::string &file, int channels, bool png) {
            ImageD img = png ? read_png(dir / file) : read_pfm(dir / file);
            if (img.channels() != channels) {
                throw IoError(dir / file, "expected " + std::to_string(channels) + " channel(s) for view '" + v.name + "'");
            }
            if (img.height() != res || img.width() != res) {
                throw IoError(dir / file, "size does not match declared resolution " + std::to_string(res) +
                                              " of view '" + v.name + "'");
            }
            return img;
        };
        ViewMaps vm;
        vm.rgb = load(v.rgb, 3, true);
        vm.depth = load(v.depth, 1, false);
        vm.opacity_raw = load(v.opacity, 1, false);
        vm.scale_raw = load(v.scale, 3, false);
        const ImageD qw = load(v.quat_w, 1, false);
        const ImageD qxyz = load(v.quat_xyz, 3, false);
        vm.quat_raw = ImageD(4, res, res);
        for (int r = 0; r < res; ++r) {
            for (int c = 0; c < res; ++c) {
                vm.quat_raw(0, r, c) = qw(0, r, c);
                for (int k = 0; k < 3; ++k) {
                    vm.quat_raw(k + 1, r, c) = qxyz(k, r, c);
                }
            }
        }
        views.cameras.push_back(v.camera);
        views.maps.push_back(std::move(vm));
    }
    if (manifest_out) {
        *manifest_out = m;
    }
    return views;
}

} // namespace orthofuse

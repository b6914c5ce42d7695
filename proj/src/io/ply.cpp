#include "physgs/io.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace physgs::io {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

struct Property {
    std::string name;
    Scalar type = Scalar::F32;
    std::size_t offset = 0;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
    bool has_list = false;
    std::size_t stride = 0;
};

std::size_t scalar_size(Scalar s)
{
    switch (s) {
    case Scalar::I8:
    case Scalar::U8:
        return 1;
    case Scalar::I16:
    case Scalar::U16:
        return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32:
        return 4;
    case Scalar::F64:
        return 8;
    }
    return 0;
}

Scalar parse_scalar(const std::string& t, const fs::path& path)
{
    static const std::map<std::string, Scalar> names = {
        {"char", Scalar::I8},     {"int8", Scalar::I8},      {"uchar", Scalar::U8},   {"uint8", Scalar::U8},
        {"short", Scalar::I16},   {"int16", Scalar::I16},    {"ushort", Scalar::U16}, {"uint16", Scalar::U16},
        {"int", Scalar::I32},     {"int32", Scalar::I32},    {"uint", Scalar::U32},   {"uint32", Scalar::U32},
        {"float", Scalar::F32},   {"float32", Scalar::F32},  {"double", Scalar::F64}, {"float64", Scalar::F64},
    };
    auto it = names.find(t);
    if (it == names.end()) {
        throw FormatError(path.string() + ": unknown PLY property type '" + t + "'");
    }
    return it->second;
}

double read_scalar(const char* p, Scalar s)
{
    switch (s) {
    case Scalar::I8: {
        std::int8_t v;
        std::memcpy(&v, p, 1);
        return v;
    }
    case Scalar::U8: {
        std::uint8_t v;
        std::memcpy(&v, p, 1);
        return v;
    }
    case Scalar::I16: {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        return v;
    }
    case Scalar::U16: {
        std::uint16_t v;
        std::memcpy(&v, p, 2);
        return v;
    }
    case Scalar::I32: {
        std::int32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    case Scalar::U32: {
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    case Scalar::F32: {
        float v;
        std::memcpy(&v, p, 4);
        return v;
    }
    case Scalar::F64: {
        double v;
        std::memcpy(&v, p, 8);
        return v;
    }
    }
    return 0.0;
}

constexpr std::array<const char*, 14> kFields = {"x",       "y",       "z",       "opacity", "scale_0",
                                                 "scale_1", "scale_2", "rot_0",   "rot_1",   "rot_2",
                                                 "rot_3",   "f_dc_0",  "f_dc_1",  "f_dc_2"};

GaussianKernel kernel_from_fields(const std::array<double, 14>& f, std::size_t index, const fs::path& path)
{
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) {
            throw FormatError(path.string() + ": vertex " + std::to_string(index) + ": non-finite " + kFields[i]);
        }
    }
    Eigen::Quaterniond q(f[7], f[8], f[9], f[10]);
    if (q.norm() == 0.0) {
        throw FormatError(path.string() + ": vertex " + std::to_string(index) + ": zero rotation quaternion");
    }
    q.normalize();
    const Mat3 r = q.toRotationMatrix();
    const Vec3 var(std::exp(2.0 * f[4]), std::exp(2.0 * f[5]), std::exp(2.0 * f[6]));
    const Mat3 h = r * var.asDiagonal() * r.transpose();
    const double opacity = 1.0 / (1.0 + std::exp(-f[3]));
    const Vec3 color = (Vec3(f[11], f[12], f[13]) * kShC0 + Vec3::Constant(0.5)).cwiseMax(0.0).cwiseMin(1.0);
    GaussianKernel k = GaussianKernel::make(Vec3(f[0], f[1], f[2]), opacity, h, color);
    try {
        k.validate(index);
    } catch (const Error& e) {
        throw FormatError(path.string() + ": vertex " + std::to_string(index) + ": " + e.what());
    }
    return k;
}

} // namespace

std::vector<GaussianKernel> load_splats(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open");
    }
    std::string line;
    std::getline(in, line);
    if (line != "ply" && line != "ply\r") {
        throw FormatError(path.string() + ": not a PLY file");
    }
    bool binary = false;
    bool have_format = false;
    std::vector<Element> elements;
    while (true) {
        if (!std::getline(in, line)) {
            throw FormatError(path.string() + ": header has no end_header");
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") {
            break;
        }
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "binary_little_endian") {
                binary = true;
            } else if (fmt != "ascii") {
                throw FormatError(path.string() + ": unsupported PLY format '" + fmt + "'");
            }
            have_format = true;
        } else if (word == "element") {
            Element e;
            long long count = -1;
            ls >> e.name >> count;
            if (!ls || count < 0) {
                throw FormatError(path.string() + ": malformed element line '" + line + "'");
            }
            e.count = static_cast<std::size_t>(count);
            elements.push_back(e);
        } else if (word == "property") {
            if (elements.empty()) {
                throw FormatError(path.string() + ": property before any element");
            }
            std::string type;
            ls >> type;
            Element& e = elements.back();
            if (type == "list") {
                e.has_list = true;
                continue;
            }
            Property p;
            p.type = parse_scalar(type, path);
            ls >> p.name;
            if (!ls) {
                throw FormatError(path.string() + ": malformed property line '" + line + "'");
            }
            p.offset = e.stride;
            e.stride += scalar_size(p.type);
            e.props.push_back(p);
        } else if (word != "comment" && word != "obj_info" && !word.empty()) {
            throw FormatError(path.string() + ": unexpected header line '" + line + "'");
        }
    }
    if (!have_format) {
        throw FormatError(path.string() + ": missing format line");
    }

    std::size_t skip_bytes = 0;
    std::size_t skip_lines = 0;
    const Element* vertex = nullptr;
    for (const Element& e : elements) {
        if (e.name == "vertex") {
            vertex = &e;
            break;
        }
        if (e.has_list) {
            throw FormatError(path.string() + ": list element '" + e.name + "' before the vertex element");
        }
        skip_bytes += e.count * e.stride;
        skip_lines += e.count;
    }
    if (vertex == nullptr) {
        throw FormatError(path.string() + ": no vertex element");
    }
    if (vertex->has_list) {
        throw FormatError(path.string() + ": list properties on vertices are not supported");
    }

    std::array<const Property*, 14> slots{};
    for (std::size_t i = 0; i < kFields.size(); ++i) {
        for (const Property& p : vertex->props) {
            if (p.name == kFields[i]) {
                slots[i] = &p;
            }
        }
        if (slots[i] == nullptr && vertex->count > 0) {
            throw FormatError(path.string() + ": missing vertex property '" + kFields[i] + "'");
        }
    }

    std::vector<GaussianKernel> kernels;
    kernels.reserve(vertex->count);
    std::array<double, 14> f{};
    if (binary) {
        in.seekg(static_cast<std::streamoff>(skip_bytes), std::ios::cur);
        std::vector<char> row(vertex->stride);
        for (std::size_t v = 0; v < vertex->count; ++v) {
            if (!in.read(row.data(), static_cast<std::streamsize>(row.size()))) {
                throw FormatError(path.string() + ": vertex " + std::to_string(v) + ": unexpected end of file");
            }
            for (std::size_t i = 0; i < f.size(); ++i) {
                f[i] = read_scalar(row.data() + slots[i]->offset, slots[i]->type);
            }
            kernels.push_back(kernel_from_fields(f, v, path));
        }
    } else {
        for (std::size_t i = 0; i < skip_lines; ++i) {
            std::getline(in, line);
        }
        std::vector<double> row(vertex->props.size());
        for (std::size_t v = 0; v < vertex->count; ++v) {
            if (!std::getline(in, line)) {
                throw FormatError(path.string() + ": vertex " + std::to_string(v) + ": unexpected end of file");
            }
            std::istringstream ls(line);
            for (double& x : row) {
                std::string tok;
                if (!(ls >> tok)) {
                    throw FormatError(path.string() + ": vertex " + std::to_string(v) + ": too few values");
                }
                try {
                    x = std::stod(tok);
                } catch (const std::exception&) {
                    throw FormatError(path.string() + ": vertex " + std::to_string(v) + ": malformed value '" +
                                      tok + "'");
                }
            }
            for (std::size_t i = 0; i < f.size(); ++i) {
                f[i] = row[static_cast<std::size_t>(slots[i] - vertex->props.data())];
            }
            kernels.push_back(kernel_from_fields(f, v, path));
        }
    }
    return kernels;
}

void save_splats(std::span<const GaussianKernel> kernels, const fs::path& path)
{
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        kernels[i].validate(i);
    }
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << kernels.size() << '\n';
    for (const char* name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
                             "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        out << "property float " << name << '\n';
    }
    out << "end_header\n";
    for (const GaussianKernel& k : kernels) {
        Eigen::SelfAdjointEigenSolver<Mat3> eig(k.world_covariance);
        Mat3 r = eig.eigenvectors();
        if (r.determinant() < 0.0) {
            r.col(0) *= -1.0;
        }
        const Eigen::Quaterniond q(r);
        const Vec3 log_scale = 0.5 * eig.eigenvalues().cwiseMax(1e-30).array().log().matrix();
        const double s = std::clamp(k.opacity, 1e-7, 1.0 - 1e-7);
        const Vec3 dc = (k.color - Vec3::Constant(0.5)) / kShC0;
        const std::array<float, 17> row = {
            float(k.center.x()), float(k.center.y()), float(k.center.z()), 0.f, 0.f, 0.f, float(dc.x()),
            float(dc.y()),       float(dc.z()),       float(std::log(s / (1.0 - s))), float(log_scale.x()),
            float(log_scale.y()), float(log_scale.z()), float(q.w()), float(q.x()), float(q.y()), float(q.z())};
        out.write(reinterpret_cast<const char*>(row.data()), sizeof(row));
    }
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

void ensure_parent(const fs::path& path)
{
    const fs::path parent = path.parent_path();
    if (parent.empty()) {
        return;
    }
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) {
        throw FormatError(parent.string() + ": cannot create directory: " + ec.message());
    }
}

} // namespace physgs::io

#include "physgs/io.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace physgs::io {

namespace {

constexpr char kParticleMagic[4] = {'P', 'G', 'S', 'P'};
constexpr char kTensorMagic[4] = {'F', 'T', 'E', 'N'};
constexpr std::uint32_t kFloat32 = 1;

template <class T>
void put(std::ostream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const fs::path& path)
{
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw FormatError(path.string() + ": unexpected end of file");
    }
    return v;
}

std::ofstream open_out(const fs::path& path)
{
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    return out;
}

std::ifstream open_in(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open");
    }
    return in;
}

void check_magic(std::istream& in, const char (&magic)[4], const fs::path& path)
{
    char m[4];
    if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic");
    }
}

void put_mat(std::ostream& out, const Mat3& m)
{
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            put(out, m(r, c));
        }
    }
}

Mat3 get_mat(std::istream& in, const fs::path& path)
{
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            m(r, c) = get<double>(in, path);
        }
    }
    return m;
}

} // namespace

void write_particles(std::span<const mpm::Particle> particles, double time, const fs::path& path)
{
    std::ofstream out = open_out(path);
    out.write(kParticleMagic, 4);
    put<std::uint32_t>(out, 1);
    put<std::uint64_t>(out, particles.size());
    put(out, time);
    for (const mpm::Particle& p : particles) {
        for (int a = 0; a < 3; ++a) {
            put(out, p.position(a));
        }
        for (int a = 0; a < 3; ++a) {
            put(out, p.velocity(a));
        }
        put(out, p.mass);
        put(out, p.rest_volume);
        put_mat(out, p.deformation);
        put_mat(out, p.affine);
        put(out, p.plastic_state);
        put<std::int32_t>(out, p.material);
    }
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

ParticleDump read_particles(const fs::path& path)
{
    std::ifstream in = open_in(path);
    check_magic(in, kParticleMagic, path);
    if (get<std::uint32_t>(in, path) != 1) {
        throw FormatError(path.string() + ": unsupported particle dump version");
    }
    const auto n = get<std::uint64_t>(in, path);
    ParticleDump dump;
    dump.time = get<double>(in, path);
    dump.particles.resize(n);
    for (mpm::Particle& p : dump.particles) {
        for (int a = 0; a < 3; ++a) {
            p.position(a) = get<double>(in, path);
        }
        for (int a = 0; a < 3; ++a) {
            p.velocity(a) = get<double>(in, path);
        }
        p.mass = get<double>(in, path);
        p.rest_volume = get<double>(in, path);
        p.deformation = get_mat(in, path);
        p.affine = get_mat(in, path);
        p.plastic_state = get<double>(in, path);
        p.material = get<std::int32_t>(in, path);
    }
    return dump;
}

std::size_t FeatureTensor::element_count() const
{
    std::size_t n = 1;
    for (auto d : dims) {
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void write_tensor(const FeatureTensor& tensor, const fs::path& path)
{
    if (tensor.dims.empty() || tensor.element_count() != tensor.data.size()) {
        throw FormatError(path.string() + ": tensor dims do not match its payload");
    }
    std::ofstream out = open_out(path);
    out.write(kTensorMagic, 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) {
        put<std::uint64_t>(out, d);
    }
    put<std::uint32_t>(out, kFloat32);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.tag.size()));
    out.write(tensor.tag.data(), static_cast<std::streamsize>(tensor.tag.size()));
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

FeatureTensor read_tensor(const fs::path& path)
{
    std::ifstream in = open_in(path);
    check_magic(in, kTensorMagic, path);
    FeatureTensor t;
    const auto rank = get<std::uint32_t>(in, path);
    if (rank == 0 || rank > 8) {
        throw FormatError(path.string() + ": unsupported tensor rank " + std::to_string(rank));
    }
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.dims.push_back(get<std::uint64_t>(in, path));
    }
    if (get<std::uint32_t>(in, path) != kFloat32) {
        throw FormatError(path.string() + ": only float32 tensors are supported");
    }
    const auto tag_len = get<std::uint32_t>(in, path);
    t.tag.resize(tag_len);
    if (!in.read(t.tag.data(), tag_len)) {
        throw FormatError(path.string() + ": unexpected end of file");
    }
    t.data.resize(t.element_count());
    if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4))) {
        throw FormatError(path.string() + ": truncated tensor payload");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(path.string() + ": trailing bytes after the tensor payload");
    }
    return t;
}

propagate::Tokens to_tokens(const FeatureTensor& tensor)
{
    if (tensor.dims.size() != 2 && tensor.dims.size() != 3) {
        throw FormatError("feature tensor '" + tensor.tag + "': expected rank 2 or 3");
    }
    const auto d = static_cast<Eigen::Index>(tensor.dims.back());
    const auto n = static_cast<Eigen::Index>(tensor.element_count() / std::max<std::uint64_t>(tensor.dims.back(), 1));
    propagate::Tokens out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            out(i, j) = tensor.data[static_cast<std::size_t>(i * d + j)];
        }
    }
    return out;
}

FeatureTensor from_tokens(const propagate::Tokens& tokens, const std::vector<std::uint64_t>& dims,
                          const std::string& tag)
{
    FeatureTensor t;
    t.dims = dims;
    t.tag = tag;
    if (t.element_count() != static_cast<std::size_t>(tokens.size()) || dims.back() != std::uint64_t(tokens.cols())) {
        throw FormatError("feature tensor '" + tag + "': dims do not match the token matrix");
    }
    t.data.resize(static_cast<std::size_t>(tokens.size()));
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
        for (Eigen::Index j = 0; j < tokens.cols(); ++j) {
            t.data[static_cast<std::size_t>(i * tokens.cols() + j)] = static_cast<float>(tokens(i, j));
        }
    }
    return t;
}

Camera read_camera(const fs::path& path)
{
    std::ifstream in = open_in(path);
    Camera cam;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        const auto pos = j.at("position").get<std::vector<double>>();
        const auto rot = j.at("rotation").get<std::vector<double>>();
        if (pos.size() != 3 || rot.size() != 4) {
            throw FormatError(path.string() + ": position needs 3 values and rotation 4 (w, x, y, z)");
        }
        Eigen::Quaterniond q(rot[0], rot[1], rot[2], rot[3]);
        if (q.norm() == 0.0) {
            throw FormatError(path.string() + ": zero rotation quaternion");
        }
        cam.center = Vec3(pos[0], pos[1], pos[2]);
        cam.rotation = q.normalized().toRotationMatrix();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.azimuth = j.value("azimuth", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    try {
        cam.validate();
    } catch (const Error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return cam;
}

void write_camera(const Camera& camera, const fs::path& path)
{
    const Eigen::Quaterniond q(camera.rotation);
    const nlohmann::json j = {
        {"position", {camera.center.x(), camera.center.y(), camera.center.z()}},
        {"rotation", {q.w(), q.x(), q.y(), q.z()}},
        {"fx", camera.fx},
        {"fy", camera.fy},
        {"cx", camera.cx},
        {"cy", camera.cy},
        {"width", camera.width},
        {"height", camera.height},
        {"azimuth", camera.azimuth},
    };
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
            cell.pop_back();
        }
        std::size_t start = cell.find_first_not_of(' ');
        cells.push_back(start == std::string::npos ? "" : cell.substr(start));
    }
    return cells;
}

} // namespace

metrics::ScoreTable read_scores(const fs::path& path)
{
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": empty score table");
    }
    metrics::ScoreTable table;
    const auto header = split_csv(line);
    if (header.size() < 2) {
        throw FormatError(path.string() + ": header needs a model column and at least one scene");
    }
    table.scenes.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \r") == std::string::npos) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " cells");
        }
        table.models.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cells[c].size() || cells[c].empty()) {
                throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": '" + cells[c] +
                                  "' is not a number");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    table.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.scenes.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            table.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return table;
}

void write_scores(const metrics::ScoreTable& table, const fs::path& path)
{
    table.validate();
    std::ofstream out = open_out(path);
    out.precision(17);
    out << "model";
    for (const auto& s : table.scenes) {
        out << ',' << s;
    }
    out << '\n';
    for (std::size_t r = 0; r < table.models.size(); ++r) {
        out << table.models[r];
        for (Eigen::Index c = 0; c < table.scores.cols(); ++c) {
            out << ',' << table.scores(static_cast<Eigen::Index>(r), c);
        }
        out << '\n';
    }
}

} // namespace physgs::io

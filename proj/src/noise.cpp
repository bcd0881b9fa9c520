#include "seeopt/noise.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "seeopt/parallel.hpp"
#include "seeopt/rng.hpp"

namespace seeopt {

void validate(const TimeGrid& grid) {
    if (!(grid.horizon > 0.0)) throw ConfigError("TimeGrid: horizon must be positive");
    if (grid.n_steps <= 0) throw ConfigError("TimeGrid: n_steps must be positive");
    if (std::abs(grid.n_steps * grid.dt() - grid.horizon) > 1e-12 * grid.horizon)
        throw ConfigError("TimeGrid: steps do not tile the horizon");
}

void validate(const MarkSpace& marks) {
    if (marks.values.size() != marks.intensities.size())
        throw ConfigError("MarkSpace: values and intensities differ in length");
    for (int i = 0; i < marks.n_marks(); ++i)
        if (!(marks.intensities[i] > 0.0))
            throw ConfigError("MarkSpace: intensities must be positive");
}

NoiseBundle sample_noise(const TimeGrid& grid, const MarkSpace& marks, int n_paths,
                         std::uint64_t seed) {
    validate(grid);
    validate(marks);
    if (n_paths <= 0) throw ConfigError("sample_noise: n_paths must be positive");
    if (marks.n_marks() > 0xFFF) throw ConfigError("sample_noise: too many marks");

    NoiseBundle out;
    out.grid = grid;
    out.marks = marks;
    out.n_paths = n_paths;
    out.seed = seed;
    out.dw.resize(grid.n_steps, n_paths);
    out.jumps.assign(marks.n_marks(), Eigen::MatrixXi(grid.n_steps, n_paths));

    const double sqrt_dt = std::sqrt(grid.dt());
    const double dt = grid.dt();
    parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
        for (int k = 0; k < grid.n_steps; ++k) {
            out.dw(k, static_cast<int>(p)) =
                sqrt_dt * normal_draw(seed, p, static_cast<std::uint32_t>(k));
            for (int i = 0; i < marks.n_marks(); ++i)
                out.jumps[i](k, static_cast<int>(p)) =
                    poisson_draw(seed, p, static_cast<std::uint32_t>(k),
                                 static_cast<std::uint32_t>(i), marks.intensities[i] * dt);
        }
    });
    return out;
}

VectorXd compensated_sum(const NoiseBundle& noise,
                         const std::function<double(int, int, int)>& integrand) {
    VectorXd out = VectorXd::Zero(noise.n_paths);
    const double dt = noise.grid.dt();
    for (int k = 0; k < noise.grid.n_steps; ++k) {
        for (int i = 0; i < noise.marks.n_marks(); ++i) {
            const double comp = noise.marks.intensities[i] * dt;
            for (int p = 0; p < noise.n_paths; ++p)
                out[p] += integrand(p, k, i) * (noise.jumps[i](k, p) - comp);
        }
    }
    return out;
}

NoiseBundle coarsen_noise(const NoiseBundle& fine, int factor) {
    if (factor <= 0 || fine.grid.n_steps % factor != 0)
        throw ConfigError("coarsen_noise: factor must divide n_steps");
    NoiseBundle out;
    out.grid = TimeGrid{fine.grid.horizon, fine.grid.n_steps / factor};
    out.marks = fine.marks;
    out.n_paths = fine.n_paths;
    out.seed = fine.seed;
    out.dw = MatrixXd::Zero(out.grid.n_steps, out.n_paths);
    out.jumps.assign(fine.marks.n_marks(),
                     Eigen::MatrixXi::Zero(out.grid.n_steps, out.n_paths));
    for (int k = 0; k < out.grid.n_steps; ++k) {
        for (int j = 0; j < factor; ++j) {
            out.dw.row(k) += fine.dw.row(k * factor + j);
            for (int i = 0; i < fine.marks.n_marks(); ++i)
                out.jumps[i].row(k) += fine.jumps[i].row(k * factor + j);
        }
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'E', 'E', 'N', 'O', 'I', 'S', '1'};

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw ConfigError("load_noise: truncated file");
    return v;
}

}  // namespace

void save_noise(const NoiseBundle& noise, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("save_noise: cannot open " + path);
    f.write(kMagic, sizeof(kMagic));
    write_raw(f, noise.grid.horizon);
    write_raw(f, static_cast<std::int64_t>(noise.grid.n_steps));
    write_raw(f, static_cast<std::int64_t>(noise.n_paths));
    write_raw(f, static_cast<std::int64_t>(noise.marks.n_marks()));
    write_raw(f, noise.seed);
    for (int i = 0; i < noise.marks.n_marks(); ++i) {
        write_raw(f, noise.marks.values[i]);
        write_raw(f, noise.marks.intensities[i]);
    }
    f.write(reinterpret_cast<const char*>(noise.dw.data()),
            static_cast<std::streamsize>(sizeof(double) * noise.dw.size()));
    for (const auto& m : noise.jumps)
        f.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(int) * m.size()));
    if (!f) throw ConfigError("save_noise: write failed for " + path);
}

NoiseBundle load_noise(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("load_noise: cannot open " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("load_noise: bad header in " + path);
    NoiseBundle out;
    out.grid.horizon = read_raw<double>(f);
    out.grid.n_steps = static_cast<int>(read_raw<std::int64_t>(f));
    out.n_paths = static_cast<int>(read_raw<std::int64_t>(f));
    const int n_marks = static_cast<int>(read_raw<std::int64_t>(f));
    out.seed = read_raw<std::uint64_t>(f);
    out.marks.values.resize(n_marks);
    out.marks.intensities.resize(n_marks);
    for (int i = 0; i < n_marks; ++i) {
        out.marks.values[i] = read_raw<double>(f);
        out.marks.intensities[i] = read_raw<double>(f);
    }
    out.dw.resize(out.grid.n_steps, out.n_paths);
    f.read(reinterpret_cast<char*>(out.dw.data()),
           static_cast<std::streamsize>(sizeof(double) * out.dw.size()));
    out.jumps.assign(n_marks, Eigen::MatrixXi(out.grid.n_steps, out.n_paths));
    for (auto& m : out.jumps)
        f.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(sizeof(int) * m.size()));
    if (!f) throw ConfigError("load_noise: truncated file " + path);
    return out;
}

}  // namespace seeopt

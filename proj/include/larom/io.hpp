#pragma once

// File formats: PTC logs, map dumps, EQ weight tables, the ROM artifact
// directory (binary matrices with text headers), and the run-report CSVs.

#include "larom/core.hpp"
#include "larom/mor.hpp"
#include "larom/training.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace larom::io {

namespace fs = std::filesystem;

inline void write_ptc_log(const euler1d::PtcResult& r, std::ostream& os) {
    os << "iter, cfl, residual_norm\n";
    os.precision(17);
    for (std::size_t i = 0; i + 1 < r.history.size(); ++i)
        os << i << ", " << (i < r.cfl_history.size() ? r.cfl_history[i] : 0.0) << ", "
           << r.history[i + 1] << "\n";
}

// Map dump: header, POD basis coefficients row-major, then one line per
// training parameter with its compressed coordinates.
inline void write_map(const registration::ParametricMap& pm, std::ostream& os) {
    os << "# J=" << pm.basis->degree() << " m=" << pm.W.cols() << "\n";
    os.precision(17);
    for (int r = 0; r < pm.W.rows(); ++r) {
        for (int c = 0; c < pm.W.cols(); ++c) os << (c ? " " : "") << pm.W(r, c);
        os << "\n";
    }
    for (std::size_t t = 0; t < pm.train_mu.size(); ++t) {
        os << pm.train_mu[t][0] << ", " << pm.train_mu[t][1];
        for (int c = 0; c < pm.train_coords.rows(); ++c) os << ", " << pm.train_coords(c, t);
        os << "\n";
    }
}

inline void write_eq_weights(const mor::EqWeights& eq, const fs::path& dir) {
    {
        std::ofstream f(dir / "eq_elem.txt");
        f.precision(17);
        for (int k = 0; k < eq.rho_e.size(); ++k)
            if (eq.rho_e[k] != 0.0) f << k << ", " << eq.rho_e[k] << "\n";
    }
    {
        std::ofstream f(dir / "eq_facet.txt");
        f.precision(17);
        for (int j = 0; j < eq.rho_f.size(); ++j)
            if (eq.rho_f[j] != 0.0) f << j << ", " << eq.rho_f[j] << "\n";
    }
}

// Binary matrix: one text header line "# rows cols", then row-major
// little-endian doubles.
inline void write_matrix(const MatrixXd& m, const fs::path& file) {
    std::ofstream f(file, std::ios::binary);
    f << "# " << m.rows() << " " << m.cols() << "\n";
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            f.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
}

inline MatrixXd read_matrix(const fs::path& file) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw std::runtime_error("read_matrix: cannot open " + file.string());
    std::string header;
    std::getline(f, header);
    std::istringstream hs(header);
    std::string hash;
    long rows, cols;
    hs >> hash >> rows >> cols;
    if (hash != "#" || rows < 0 || cols < 0)
        throw std::runtime_error("read_matrix: malformed header in " + file.string());
    MatrixXd m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            double v;
            f.read(reinterpret_cast<char*>(&v), sizeof(double));
            m(r, c) = v;
        }
    if (!f) throw std::runtime_error("read_matrix: truncated data in " + file.string());
    return m;
}

// ROM artifact directory: basis matrices in binary, weights/index sets and
// regressor data as text.
inline void save_rom(const mor::RomArtifact& rom, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "mesh.txt");
        mesh1d::dump_mesh(*rom.mesh, f);
    }
    write_matrix(rom.trial.Z, dir / "trial.bin");
    write_matrix(rom.test.Psi, dir / "test.bin");
    write_matrix(rom.train_coords, dir / "train_coords.bin");
    write_matrix(rom.map.W, dir / "map_basis.bin");
    {
        MatrixXd eig(rom.trial.eigenvalues.size(), 1);
        eig.col(0) = rom.trial.eigenvalues;
        write_matrix(eig, dir / "pod_eigs.bin");
    }
    write_eq_weights(rom.eq, dir);
    {
        std::ofstream f(dir / "train_mu.txt");
        f.precision(17);
        for (const auto& mu : rom.train_mu) f << mu[0] << ", " << mu[1] << "\n";
    }
    {
        std::ofstream f(dir / "map.txt");
        write_map(rom.map, f);
    }
    {
        std::ofstream f(dir / "problem.txt");
        f.precision(17);
        f << "L = " << rom.problem.L << "\np_tot = " << rom.problem.p_tot
          << "\nT_tot = " << rom.problem.T_tot << "\ngamma = " << rom.problem.gamma
          << "\nc_nu = " << rom.problem.c_nu << "\ngamma_ip = " << rom.problem.gamma_ip_factor
          << "\nkink_smoothing = " << rom.problem.kink_smoothing << "\n";
    }
    if (rom.init_mu.size() > 0) {
        write_matrix(rom.init_coords, dir / "init_coords.bin");
        std::ofstream f(dir / "init_mu.txt");
        f.precision(17);
        for (const auto& mu : rom.init_mu) f << mu[0] << ", " << mu[1] << "\n";
    }
}

inline std::vector<Vector2d> read_mu_list(const fs::path& file) {
    std::ifstream f(file);
    std::vector<Vector2d> out;
    std::string line;
    while (std::getline(f, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double a, b;
        if (ls >> a >> b) out.emplace_back(a, b);
    }
    return out;
}

inline mor::RomArtifact load_rom(const fs::path& dir,
                                 std::shared_ptr<const registration::MapBasis> basis) {
    mor::RomArtifact rom;
    {
        std::ifstream f(dir / "mesh.txt");
        if (!f) throw std::runtime_error("load_rom: missing mesh.txt");
        std::string header;
        std::getline(f, header);
        int p = 2;
        {
            std::istringstream hs(header);
            std::string tok;
            while (hs >> tok)
                if (tok.rfind("p=", 0) == 0) p = std::stoi(tok.substr(2));
        }
        std::vector<double> nodes;
        double x;
        while (f >> x) nodes.push_back(x);
        rom.mesh = std::make_shared<mesh1d::Mesh1D>(nodes, p);
    }
    rom.trial.Z = read_matrix(dir / "trial.bin");
    rom.trial.mesh = rom.mesh;
    rom.test.Psi = read_matrix(dir / "test.bin");
    rom.train_coords = read_matrix(dir / "train_coords.bin");
    {
        MatrixXd eig = read_matrix(dir / "pod_eigs.bin");
        rom.trial.eigenvalues = eig.col(0);
    }
    rom.train_mu = read_mu_list(dir / "train_mu.txt");

    {
        std::ifstream f(dir / "problem.txt");
        std::string key, eq;
        double val;
        while (f >> key >> eq >> val) {
            if (key == "L") rom.problem.L = val;
            else if (key == "p_tot") rom.problem.p_tot = val;
            else if (key == "T_tot") rom.problem.T_tot = val;
            else if (key == "gamma") rom.problem.gamma = val;
            else if (key == "c_nu") rom.problem.c_nu = val;
            else if (key == "gamma_ip") rom.problem.gamma_ip_factor = val;
            else if (key == "kink_smoothing") rom.problem.kink_smoothing = val;
        }
    }

    rom.map.basis = std::move(basis);
    rom.map.W = read_matrix(dir / "map_basis.bin");
    {
        std::ifstream f(dir / "map.txt");
        std::string header;
        std::getline(f, header);
        for (int r = 0; r < rom.map.W.rows(); ++r) std::getline(f, header);  // basis rows
        std::vector<Vector2d> mus;
        std::vector<VectorXd> coords;
        std::string line;
        while (std::getline(f, line)) {
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ls(line);
            std::vector<double> vals;
            double v;
            while (ls >> v) vals.push_back(v);
            if (vals.size() < 2) continue;
            mus.emplace_back(vals[0], vals[1]);
            VectorXd c(vals.size() - 2);
            for (std::size_t i = 2; i < vals.size(); ++i) c[i - 2] = vals[i];
            coords.push_back(c);
        }
        rom.map.train_mu = mus;
        rom.map.train_coords.resize(rom.map.W.cols(), mus.size());
        for (std::size_t i = 0; i < coords.size(); ++i) rom.map.train_coords.col(i) = coords[i];
        if (!mus.empty() && rom.map.W.cols() > 0)
            rom.map.regressor = registration::map_regress(mus, rom.map.train_coords, {});
    }

    // Weights.
    const int Ne = rom.mesh->n_elements(), Nf = rom.mesh->n_facets();
    rom.eq.rho_e = VectorXd::Zero(Ne);
    rom.eq.rho_f = VectorXd::Zero(Nf);
    auto read_weights = [](const fs::path& file, VectorXd& rho) {
        std::ifstream f(file);
        std::string line;
        while (std::getline(f, line)) {
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ls(line);
            int idx;
            double w;
            if (ls >> idx >> w) rho[idx] = w;
        }
    };
    read_weights(dir / "eq_elem.txt", rom.eq.rho_e);
    read_weights(dir / "eq_facet.txt", rom.eq.rho_f);
    rom.eq.extract_sets(Ne);
    rom.build_blocks();

    if (fs::exists(dir / "init_coords.bin")) {
        rom.init_coords = read_matrix(dir / "init_coords.bin");
        rom.init_mu = read_mu_list(dir / "init_mu.txt");
    }
    return rom;
}

// ---- run-report CSV tables --------------------------------------------------

inline void write_metrics_csv(const training::RunReport& report, const fs::path& file) {
    std::ofstream f(file);
    f << "iteration, A0, p0, E_hf, eta, E_inf, online_seconds\n";
    f.precision(12);
    for (const auto& it : report.iterations)
        for (const auto& m : it.metrics)
            f << it.iteration << ", " << m.mu[0] << ", " << m.mu[1] << ", " << m.e_hf << ", "
              << m.eta << ", " << m.e_inf << ", " << m.online_seconds << "\n";
}

inline void write_pod_eigs_csv(const training::RunReport& report, const fs::path& file) {
    std::ofstream f(file);
    f << "iteration, index, lambda_registered, lambda_unregistered\n";
    f.precision(12);
    for (const auto& it : report.iterations) {
        int n = static_cast<int>(
            std::max(it.pod_eigs_registered.size(), it.pod_eigs_unregistered.size()));
        for (int i = 0; i < n; ++i) {
            double lr = i < it.pod_eigs_registered.size() ? it.pod_eigs_registered[i] : 0.0;
            double lu = i < it.pod_eigs_unregistered.size() ? it.pod_eigs_unregistered[i] : 0.0;
            f << it.iteration << ", " << i << ", " << lr << ", " << lu << "\n";
        }
    }
}

inline void write_costs_csv(const training::RunReport& report, const fs::path& file) {
    std::ofstream f(file);
    f << "phase, seconds, iteration\n";
    f.precision(6);
    for (const auto& it : report.iterations) {
        for (const auto& [phase, sec] : it.phase_seconds)
            f << phase << ", " << sec << ", " << it.iteration << "\n";
        f << "rob_size, " << it.rob_size << ", " << it.iteration << "\n";
        f << "mesh_elements, " << it.mesh_elements << ", " << it.iteration << "\n";
    }
    f << "total, " << report.total_seconds << ", 0\n";
}

// Density traces in physical and reference configuration for a few
// parameters (plot-ready, gnuplot-style blocks).
inline void write_shock_profiles(const mor::RomArtifact& rom, const std::vector<Vector2d>& mus,
                                 const training::TrainingConfig& cfg, const fs::path& file) {
    std::ofstream f(file);
    f.precision(12);
    const int samples = 400;
    for (const auto& mu : mus) {
        registration::Map1D map = rom.map.map_at(mu);
        mesh1d::MeshPtr dmesh = mesh1d::deform_mesh(*rom.mesh, map);
        mor::LspgReport rep = mor::lspg_solve(mu, rom, rom.nearest_init(mu, cfg.box), cfg.gnm);
        mesh1d::StateField phys(dmesh, 3, rom.trial.Z * rep.alpha);
        mesh1d::StateField mapped(rom.mesh, 3, rom.trial.Z * rep.alpha);
        f << "# mu = (" << mu[0] << ", " << mu[1] << ") physical\n";
        for (int s = 0; s <= samples; ++s) {
            double x = rom.problem.L * double(s) / samples;
            f << x << " " << phys.eval(x, 0) << "\n";
        }
        f << "\n\n# mu = (" << mu[0] << ", " << mu[1] << ") reference\n";
        for (int s = 0; s <= samples; ++s) {
            double x = rom.problem.L * double(s) / samples;
            f << x << " " << mapped.eval(x, 0) << "\n";
        }
        f << "\n\n";
    }
}

}  // namespace larom::io

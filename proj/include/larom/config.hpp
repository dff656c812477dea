#pragma once

// Flat `key = value` configuration with `[section]` headers. Defaults match
// the published problem setup; every field maps onto TrainingConfig.

#include "larom/training.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace larom::config {

struct KeyValues {
    std::map<std::string, std::string> entries;  // "section.key" -> value

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    double number(const std::string& key, double fallback) const {
        auto it = entries.find(key);
        return it == entries.end() ? fallback : std::stod(it->second);
    }
    int integer(const std::string& key, int fallback) const {
        auto it = entries.find(key);
        return it == entries.end() ? fallback : std::stoi(it->second);
    }
    bool flag(const std::string& key, bool fallback) const {
        auto it = entries.find(key);
        if (it == entries.end()) return fallback;
        return it->second == "true" || it->second == "1" || it->second == "yes";
    }
};

inline KeyValues parse_config(std::istream& is) {
    KeyValues kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        if (line.front() == '[') {
            auto close = line.find(']');
            if (close == std::string::npos)
                throw std::runtime_error("config: unterminated section at line " +
                                         std::to_string(lineno));
            section = line.substr(1, close - 1);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key = value at line " +
                                     std::to_string(lineno));
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        val.erase(val.begin(), std::find_if(val.begin(), val.end(), notspace));
        kv.entries[section.empty() ? key : section + "." + key] = val;
    }
    return kv;
}

inline KeyValues parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return parse_config(f);
}

inline training::TrainingConfig make_training_config(const KeyValues& kv) {
    training::TrainingConfig cfg;

    cfg.problem.L = kv.number("problem.L", 10.0);
    cfg.problem.p_tot = kv.number("problem.p_tot", 0.95);
    cfg.problem.T_tot = kv.number("problem.T_tot", 0.95);
    cfg.problem.gamma = kv.number("problem.gamma", 1.4);
    cfg.box.lo[0] = kv.number("problem.A0_min", 0.5);
    cfg.box.hi[0] = kv.number("problem.A0_max", 1.5);
    cfg.box.lo[1] = kv.number("problem.p0_min", 0.7);
    cfg.box.hi[1] = kv.number("problem.p0_max", 0.85);

    cfg.n_elements0 = kv.integer("discretization.n_elements", 60);
    cfg.degree = kv.integer("discretization.degree", 2);
    cfg.problem.c_nu = kv.number("discretization.c_nu", 0.1);
    cfg.problem.gamma_ip_factor = kv.number("discretization.gamma_ip_factor", 10.0);
    cfg.problem.kink_smoothing = kv.number("discretization.kink_smoothing", 1e-3);
    cfg.ptc.cfl0 = kv.number("discretization.cfl0", 1.0);
    cfg.ptc.residual_tol = kv.number("discretization.ptc_tol", 1e-10);
    cfg.ptc.max_iters = kv.integer("discretization.ptc_max_iters", 2500);
    cfg.warm_cfl0 = kv.number("discretization.warm_cfl0", 100.0);
    cfg.coarse_elements = kv.integer("discretization.coarse_elements", 20);

    cfg.reg.xi = kv.number("registration.xi", 1e-3);
    cfg.reg.eps = kv.number("registration.eps", 0.1);
    cfg.reg.c_exp = 0.025 * cfg.reg.eps;
    cfg.reg.kappa_msh = kv.number("registration.kappa_msh", 10.0);
    cfg.reg.delta = kv.number("registration.delta", 0.5);
    cfg.reg.tol_pod = kv.number("registration.tol_pod", 1e-8);
    cfg.reg.grad_tol = kv.number("registration.grad_tol", 1e-8);
    cfg.reg.max_opt_iters = kv.integer("registration.max_opt_iters", 500);

    cfg.tol = kv.number("rom.tol", 1e-3);
    cfg.jes_factor = kv.integer("rom.jes_factor", 2);
    cfg.tol_eq = kv.number("rom.tol_eq", 1e-10);
    cfg.n_max = kv.integer("rom.n_max", 30);
    cfg.gnm.tol = kv.number("rom.gnm_tol", 1e-10);
    cfg.gnm.max_iters = kv.integer("rom.gnm_max_iters", 50);
    cfg.test_space_energy_criterion = kv.flag("rom.test_space_energy_criterion", false);

    cfg.iterations = kv.integer("loop.iterations", 3);
    cfg.mesh_growth = kv.number("loop.mesh_growth", 1.5);
    cfg.accelerated = kv.flag("loop.accelerated", false);
    cfg.hf_first_iteration = kv.flag("loop.hf_first_iteration", false);
    cfg.train_grid = kv.integer("loop.train_grid", 15);
    cfg.greedy_grid = kv.integer("loop.greedy_grid", 10);
    cfg.n0_grid = kv.integer("loop.n0_grid", 3);
    cfg.n_test = kv.integer("loop.n_test", 20);
    cfg.seed = static_cast<std::uint64_t>(kv.number("loop.seed", 2024));
    cfg.jobs = kv.integer("loop.jobs", 1);
    return cfg;
}

}  // namespace larom::config

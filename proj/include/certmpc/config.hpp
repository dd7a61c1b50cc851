#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "certmpc/model.hpp"

namespace certmpc {

/// Parsed configuration value. Matrices are written row-major with
/// explicit dimensions: `A = matrix(2, 2) [1, 0, 0, 1]`; vectors as
/// `x = vector(2) [-6, 2]`; scalars, booleans and quoted strings directly.
struct ConfigValue {
    enum class Kind { Number, Boolean, String, MatrixVal, VectorVal };
    Kind kind = Kind::Number;
    double number = 0.0;
    bool boolean = false;
    std::string text;
    Matrix matrix;
    Vector vector;
    int line = 0;
};

/// One `name { ... }` block of the experiment file.
class ConfigSection {
public:
    std::map<std::string, ConfigValue> values;
    std::map<std::string, std::unique_ptr<ConfigSection>> sections;
    std::string path;  // dotted path for diagnostics
    int line = 0;

    bool has(const std::string& key) const { return values.count(key) > 0; }
    const ConfigSection* section(const std::string& key) const;
    const ConfigSection& require_section(const std::string& key) const;

    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    std::optional<double> number_opt(const std::string& key) const;
    long integer(const std::string& key) const;
    long integer_or(const std::string& key, long fallback) const;
    std::optional<long> integer_opt(const std::string& key) const;
    std::uint64_t seed(const std::string& key) const;
    bool boolean_or(const std::string& key, bool fallback) const;
    std::string text(const std::string& key) const;
    std::string text_or(const std::string& key, const std::string& fallback) const;
    Matrix matrix(const std::string& key) const;
    Vector vector(const std::string& key) const;

    /// Rejects keys and subsections outside the allowed sets (typo guard).
    void reject_unknown(const std::vector<std::string>& allowed_values,
                        const std::vector<std::string>& allowed_sections) const;

private:
    const ConfigValue& get(const std::string& key, ConfigValue::Kind kind) const;
};

/// Parses the nested-section text format; throws ConfigParseError with
/// line diagnostics.
std::unique_ptr<ConfigSection> parse_config(const std::string& text);
std::unique_ptr<ConfigSection> load_config_file(const std::filesystem::path& path);

/// FNV-1a hash of the raw file bytes, embedded in outputs for provenance.
std::uint64_t config_hash(const std::string& text);

struct PgdmConfig {
    std::optional<double> mu;
    std::optional<double> L;
    std::optional<double> alpha;
    double epsilon = 1e-3;
    long max_iterations = 15000;
};

struct AdmmConfig {
    double rho = 3.1231;
    std::optional<double> kappa;  // certificate override
    double epsilon = 1e-3;
    long max_iterations = 15000;
};

struct CertifyMethodConfig {
    double eta1 = 0.0;
    double eta2 = 0.0;
    std::optional<long> m_bar_override;
};

struct GammaGridConfig {
    long count = 201;
    Vector lower;
    Vector upper;
    std::uint64_t seed = 0;
};

struct CertifySettings {
    std::optional<double> gamma;           // fixed value ...
    std::optional<GammaGridConfig> gamma_grid;  // ... or sampled estimate
    double gamma_safety = 1.1;
    int ball_samples = 64;
    std::uint64_t seed = 1;
    CertifyMethodConfig pgdm;
    CertifyMethodConfig admm;
};

struct GridConfig {
    long count = 201;
    Vector lower;
    Vector upper;
    std::uint64_t seed = 1;
    double min_norm_q = 1e-3;
    /// Keep only initial conditions whose optimal open-loop trajectory parks
    /// the terminal state inside ||x_N||_Q <= terminal_ball (the sampled
    /// region-of-attraction condition).
    bool filter_terminal_ball = true;
    double terminal_ball = 1.0;
};

struct SimulateSettings {
    Vector x_init;
    int n_steps = 40;
    double v_floor = 1.0;
    bool warm_start = false;
    std::optional<GridConfig> grid;
};

struct OutputSettings {
    std::string directory = "out";
};

/// Typed view of a whole experiment file.
struct ExperimentConfig {
    Matrix A, B;
    double Ts = 1.0;
    int N = 1;
    Matrix Q, R;
    std::optional<Matrix> P;
    Vector u_lo, u_hi;
    PgdmConfig pgdm;
    AdmmConfig admm;
    CertifySettings certify;
    SimulateSettings simulate;
    OutputSettings output;
    std::uint64_t hash = 0;
    std::string source_path;

    static ExperimentConfig from_section(const ConfigSection& root);
    static ExperimentConfig load(const std::filesystem::path& path);

    MpcSpec build_spec() const;
};

}  // namespace certmpc

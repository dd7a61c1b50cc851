#include "certmpc/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace certmpc {

namespace {

struct Token {
    enum class Kind { Ident, Number, String, Equals, LBrace, RBrace, LParen, RParen, LBracket, RBracket, Comma, End };
    Kind kind;
    std::string text;
    double number = 0.0;
    int line = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& text) : text_(text) {}

    Token next() {
        skip_space_and_comments();
        Token tok;
        tok.line = line_;
        if (pos_ >= text_.size()) {
            tok.kind = Token::Kind::End;
            return tok;
        }
        const char c = text_[pos_];
        if (c == '=') { ++pos_; tok.kind = Token::Kind::Equals; return tok; }
        if (c == '{') { ++pos_; tok.kind = Token::Kind::LBrace; return tok; }
        if (c == '}') { ++pos_; tok.kind = Token::Kind::RBrace; return tok; }
        if (c == '(') { ++pos_; tok.kind = Token::Kind::LParen; return tok; }
        if (c == ')') { ++pos_; tok.kind = Token::Kind::RParen; return tok; }
        if (c == '[') { ++pos_; tok.kind = Token::Kind::LBracket; return tok; }
        if (c == ']') { ++pos_; tok.kind = Token::Kind::RBracket; return tok; }
        if (c == ',') { ++pos_; tok.kind = Token::Kind::Comma; return tok; }
        if (c == '"') return lex_string();
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            return lex_number();
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return lex_ident();
        throw ConfigParseError("line " + std::to_string(line_) + ": unexpected character '" +
                               std::string(1, c) + "'");
    }

private:
    void skip_space_and_comments() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '\n') { ++line_; ++pos_; }
            else if (std::isspace(static_cast<unsigned char>(c))) { ++pos_; }
            else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    Token lex_string() {
        Token tok;
        tok.kind = Token::Kind::String;
        tok.line = line_;
        ++pos_;  // opening quote
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\n') ++line_;
            tok.text += text_[pos_++];
        }
        if (pos_ >= text_.size()) {
            throw ConfigParseError("line " + std::to_string(tok.line) + ": unterminated string");
        }
        ++pos_;  // closing quote
        return tok;
    }

    Token lex_number() {
        Token tok;
        tok.kind = Token::Kind::Number;
        tok.line = line_;
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.' ||
                c == 'e' || c == 'E') {
                ++pos_;
            } else {
                break;
            }
        }
        tok.text = text_.substr(start, pos_ - start);
        try {
            std::size_t used = 0;
            tok.number = std::stod(tok.text, &used);
            if (used != tok.text.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigParseError("line " + std::to_string(tok.line) + ": bad number '" + tok.text + "'");
        }
        return tok;
    }

    Token lex_ident() {
        Token tok;
        tok.kind = Token::Kind::Ident;
        tok.line = line_;
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ++pos_;
            else break;
        }
        tok.text = text_.substr(start, pos_ - start);
        return tok;
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

class Parser {
public:
    explicit Parser(const std::string& text) : lexer_(text) { advance(); }

    std::unique_ptr<ConfigSection> parse_root() {
        auto root = std::make_unique<ConfigSection>();
        root->path = "";
        parse_body(*root, /*top_level=*/true);
        return root;
    }

private:
    void advance() { tok_ = lexer_.next(); }

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigParseError("line " + std::to_string(tok_.line) + ": " + what);
    }

    void parse_body(ConfigSection& section, bool top_level) {
        for (;;) {
            if (tok_.kind == Token::Kind::End) {
                if (!top_level) fail("unexpected end of file inside '" + section.path + "'");
                return;
            }
            if (tok_.kind == Token::Kind::RBrace) {
                if (top_level) fail("unmatched '}'");
                advance();
                return;
            }
            if (tok_.kind != Token::Kind::Ident) fail("expected a name");
            const std::string name = tok_.text;
            const int line = tok_.line;
            advance();
            if (tok_.kind == Token::Kind::LBrace) {
                if (section.sections.count(name)) fail("duplicate section '" + name + "'");
                auto child = std::make_unique<ConfigSection>();
                child->line = line;
                child->path = section.path.empty() ? name : section.path + "." + name;
                advance();
                parse_body(*child, /*top_level=*/false);
                section.sections.emplace(name, std::move(child));
            } else if (tok_.kind == Token::Kind::Equals) {
                if (section.values.count(name)) fail("duplicate key '" + name + "'");
                advance();
                section.values.emplace(name, parse_value());
            } else {
                fail("expected '=' or '{' after '" + name + "'");
            }
        }
    }

    std::vector<double> parse_bracket_list(std::size_t expected, int line) {
        if (tok_.kind != Token::Kind::LBracket) fail("expected '['");
        advance();
        std::vector<double> out;
        while (tok_.kind != Token::Kind::RBracket) {
            if (tok_.kind != Token::Kind::Number) fail("expected a number in [...] list");
            out.push_back(tok_.number);
            advance();
            if (tok_.kind == Token::Kind::Comma) advance();
        }
        advance();  // ']'
        if (out.size() != expected) {
            throw ConfigParseError("line " + std::to_string(line) + ": expected " +
                                   std::to_string(expected) + " entries, got " +
                                   std::to_string(out.size()));
        }
        return out;
    }

    ConfigValue parse_value() {
        ConfigValue value;
        value.line = tok_.line;
        if (tok_.kind == Token::Kind::Number) {
            value.kind = ConfigValue::Kind::Number;
            value.number = tok_.number;
            advance();
            return value;
        }
        if (tok_.kind == Token::Kind::String) {
            value.kind = ConfigValue::Kind::String;
            value.text = tok_.text;
            advance();
            return value;
        }
        if (tok_.kind == Token::Kind::Ident) {
            if (tok_.text == "true" || tok_.text == "false") {
                value.kind = ConfigValue::Kind::Boolean;
                value.boolean = tok_.text == "true";
                advance();
                return value;
            }
            if (tok_.text == "matrix" || tok_.text == "vector") {
                const bool is_matrix = tok_.text == "matrix";
                const int line = tok_.line;
                advance();
                if (tok_.kind != Token::Kind::LParen) fail("expected '(' after matrix/vector");
                advance();
                std::vector<long> dims;
                while (tok_.kind != Token::Kind::RParen) {
                    if (tok_.kind != Token::Kind::Number) fail("expected a dimension");
                    dims.push_back(static_cast<long>(tok_.number));
                    advance();
                    if (tok_.kind == Token::Kind::Comma) advance();
                }
                advance();  // ')'
                if (is_matrix) {
                    if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1) fail("matrix needs (rows, cols)");
                    const auto data = parse_bracket_list(static_cast<std::size_t>(dims[0] * dims[1]), line);
                    value.kind = ConfigValue::Kind::MatrixVal;
                    value.matrix = Matrix(dims[0], dims[1]);
                    for (long r = 0; r < dims[0]; ++r) {
                        for (long col = 0; col < dims[1]; ++col) {
                            value.matrix(r, col) = data[static_cast<std::size_t>(r * dims[1] + col)];
                        }
                    }
                } else {
                    if (dims.size() != 1 || dims[0] < 1) fail("vector needs (length)");
                    const auto data = parse_bracket_list(static_cast<std::size_t>(dims[0]), line);
                    value.kind = ConfigValue::Kind::VectorVal;
                    value.vector = Eigen::Map<const Vector>(data.data(), dims[0]);
                }
                return value;
            }
            // bare word treated as a string
            value.kind = ConfigValue::Kind::String;
            value.text = tok_.text;
            advance();
            return value;
        }
        fail("expected a value");
    }

    Lexer lexer_;
    Token tok_;
};

[[noreturn]] void missing(const ConfigSection& s, const std::string& key) {
    const std::string where = s.path.empty() ? key : s.path + "." + key;
    throw ConfigParseError("missing required field '" + where + "'");
}

}  // namespace

const ConfigSection* ConfigSection::section(const std::string& key) const {
    auto it = sections.find(key);
    return it == sections.end() ? nullptr : it->second.get();
}

const ConfigSection& ConfigSection::require_section(const std::string& key) const {
    const ConfigSection* s = section(key);
    if (!s) {
        const std::string where = path.empty() ? key : path + "." + key;
        throw ConfigParseError("missing required section '" + where + "'");
    }
    return *s;
}

const ConfigValue& ConfigSection::get(const std::string& key, ConfigValue::Kind kind) const {
    auto it = values.find(key);
    if (it == values.end()) missing(*this, key);
    if (it->second.kind != kind) {
        const char* names[] = {"number", "boolean", "string", "matrix", "vector"};
        throw ConfigParseError("line " + std::to_string(it->second.line) + ": field '" +
                               (path.empty() ? key : path + "." + key) + "' must be a " +
                               names[static_cast<int>(kind)]);
    }
    return it->second;
}

double ConfigSection::number(const std::string& key) const {
    const double v = get(key, ConfigValue::Kind::Number).number;
    if (!std::isfinite(v)) {
        throw ConfigParseError("field '" + path + "." + key + "' must be finite");
    }
    return v;
}

double ConfigSection::number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::optional<double> ConfigSection::number_opt(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
}

long ConfigSection::integer(const std::string& key) const {
    const double v = number(key);
    const long i = static_cast<long>(v);
    if (static_cast<double>(i) != v) {
        throw ConfigParseError("field '" + path + "." + key + "' must be an integer");
    }
    return i;
}

long ConfigSection::integer_or(const std::string& key, long fallback) const {
    return has(key) ? integer(key) : fallback;
}

std::optional<long> ConfigSection::integer_opt(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return integer(key);
}

std::uint64_t ConfigSection::seed(const std::string& key) const {
    const long v = integer(key);
    if (v < 0) throw ConfigParseError("field '" + path + "." + key + "' must be >= 0");
    return static_cast<std::uint64_t>(v);
}

bool ConfigSection::boolean_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    return get(key, ConfigValue::Kind::Boolean).boolean;
}

std::string ConfigSection::text(const std::string& key) const {
    return get(key, ConfigValue::Kind::String).text;
}

std::string ConfigSection::text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
}

Matrix ConfigSection::matrix(const std::string& key) const {
    return get(key, ConfigValue::Kind::MatrixVal).matrix;
}

Vector ConfigSection::vector(const std::string& key) const {
    return get(key, ConfigValue::Kind::VectorVal).vector;
}

void ConfigSection::reject_unknown(const std::vector<std::string>& allowed_values,
                                   const std::vector<std::string>& allowed_sections) const {
    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
        for (const std::string& e : v) if (e == s) return true;
        return false;
    };
    for (const auto& [key, value] : values) {
        if (!contains(allowed_values, key)) {
            throw ConfigParseError("line " + std::to_string(value.line) + ": unknown field '" +
                                   (path.empty() ? key : path + "." + key) + "'");
        }
    }
    for (const auto& [key, sec] : sections) {
        if (!contains(allowed_sections, key)) {
            throw ConfigParseError("line " + std::to_string(sec->line) + ": unknown section '" +
                                   (path.empty() ? key : path + "." + key) + "'");
        }
    }
}

std::unique_ptr<ConfigSection> parse_config(const std::string& text) {
    Parser parser(text);
    return parser.parse_root();
}

std::unique_ptr<ConfigSection> load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigParseError("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::uint64_t config_hash(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

GridConfig parse_grid(const ConfigSection& s) {
    s.reject_unknown({"count", "lower", "upper", "seed", "min_norm_q", "filter_terminal_ball",
                      "terminal_ball"},
                     {});
    GridConfig grid;
    grid.count = s.integer("count");
    if (grid.count < 1) throw ConfigParseError("field '" + s.path + ".count' must be >= 1");
    grid.lower = s.vector("lower");
    grid.upper = s.vector("upper");
    grid.seed = s.seed("seed");
    grid.min_norm_q = s.number_or("min_norm_q", 1e-3);
    grid.filter_terminal_ball = s.boolean_or("filter_terminal_ball", true);
    grid.terminal_ball = s.number_or("terminal_ball", 1.0);
    if (grid.lower.size() != grid.upper.size()) {
        throw ConfigParseError("grid bounds '" + s.path + "' have inconsistent lengths");
    }
    for (Index i = 0; i < grid.lower.size(); ++i) {
        if (!(grid.lower(i) < grid.upper(i))) {
            throw ConfigParseError("grid bounds '" + s.path + "' need lower < upper");
        }
    }
    return grid;
}

CertifyMethodConfig parse_certify_method(const ConfigSection& s) {
    s.reject_unknown({"eta1", "eta2", "m_bar_override"}, {});
    CertifyMethodConfig m;
    m.eta1 = s.number("eta1");
    m.eta2 = s.number("eta2");
    m.m_bar_override = s.integer_opt("m_bar_override");
    if (m.m_bar_override && *m.m_bar_override < 1) {
        throw ConfigParseError("field '" + s.path + ".m_bar_override' must be >= 1");
    }
    return m;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_section(const ConfigSection& root) {
    root.reject_unknown({}, {"model", "mpc", "pgdm", "admm", "certify", "simulate", "output"});
    ExperimentConfig cfg;

    const ConfigSection& model = root.require_section("model");
    model.reject_unknown({"A", "B", "Ts"}, {});
    cfg.A = model.matrix("A");
    cfg.B = model.matrix("B");
    cfg.Ts = model.number_or("Ts", 1.0);

    const ConfigSection& mpc = root.require_section("mpc");
    mpc.reject_unknown({"N", "Q", "R", "P", "u_min", "u_max"}, {});
    cfg.N = static_cast<int>(mpc.integer("N"));
    cfg.Q = mpc.matrix("Q");
    cfg.R = mpc.matrix("R");
    if (mpc.has("P")) cfg.P = mpc.matrix("P");
    cfg.u_lo = mpc.vector("u_min");
    cfg.u_hi = mpc.vector("u_max");

    const ConfigSection& pgdm = root.require_section("pgdm");
    pgdm.reject_unknown({"mu", "L", "alpha", "epsilon", "max_iterations"}, {});
    cfg.pgdm.mu = pgdm.number_opt("mu");
    cfg.pgdm.L = pgdm.number_opt("L");
    cfg.pgdm.alpha = pgdm.number_opt("alpha");
    cfg.pgdm.epsilon = pgdm.number_or("epsilon", 1e-3);
    cfg.pgdm.max_iterations = pgdm.integer_or("max_iterations", 15000);
    if (cfg.pgdm.mu.has_value() != cfg.pgdm.L.has_value()) {
        throw ConfigParseError("fields 'pgdm.mu' and 'pgdm.L' must be overridden together");
    }

    const ConfigSection& admm = root.require_section("admm");
    admm.reject_unknown({"rho", "kappa", "epsilon", "max_iterations"}, {});
    cfg.admm.rho = admm.number("rho");
    if (!(cfg.admm.rho > 0.0)) throw ConfigParseError("field 'admm.rho' must be positive");
    cfg.admm.kappa = admm.number_opt("kappa");
    cfg.admm.epsilon = admm.number_or("epsilon", 1e-3);
    cfg.admm.max_iterations = admm.integer_or("max_iterations", 15000);

    const ConfigSection& certify = root.require_section("certify");
    certify.reject_unknown({"gamma", "gamma_safety", "ball_samples", "seed"},
                           {"pgdm", "admm", "gamma_grid"});
    cfg.certify.gamma = certify.number_opt("gamma");
    cfg.certify.gamma_safety = certify.number_or("gamma_safety", 1.1);
    cfg.certify.ball_samples = static_cast<int>(certify.integer_or("ball_samples", 64));
    cfg.certify.seed = certify.has("seed") ? certify.seed("seed") : 1;
    if (const ConfigSection* gg = certify.section("gamma_grid")) {
        gg->reject_unknown({"count", "lower", "upper", "seed"}, {});
        GammaGridConfig g;
        g.count = gg->integer("count");
        g.lower = gg->vector("lower");
        g.upper = gg->vector("upper");
        g.seed = gg->seed("seed");
        cfg.certify.gamma_grid = std::move(g);
    }
    if (cfg.certify.gamma.has_value() == cfg.certify.gamma_grid.has_value()) {
        throw ConfigParseError("section 'certify' needs exactly one of 'gamma' or 'gamma_grid'");
    }
    cfg.certify.pgdm = parse_certify_method(certify.require_section("pgdm"));
    cfg.certify.admm = parse_certify_method(certify.require_section("admm"));

    const ConfigSection& simulate = root.require_section("simulate");
    simulate.reject_unknown({"x_init", "n_steps", "v_floor", "warm_start"}, {"grid"});
    cfg.simulate.x_init = simulate.vector("x_init");
    cfg.simulate.n_steps = static_cast<int>(simulate.integer_or("n_steps", 40));
    if (cfg.simulate.n_steps < 1) throw ConfigParseError("field 'simulate.n_steps' must be >= 1");
    cfg.simulate.v_floor = simulate.number_or("v_floor", 1.0);
    cfg.simulate.warm_start = simulate.boolean_or("warm_start", false);
    if (const ConfigSection* grid = simulate.section("grid")) {
        cfg.simulate.grid = parse_grid(*grid);
    }

    if (const ConfigSection* output = root.section("output")) {
        output->reject_unknown({"directory"}, {});
        cfg.output.directory = output->text_or("directory", "out");
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigParseError("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    auto root = parse_config(text);
    ExperimentConfig cfg = from_section(*root);
    cfg.hash = config_hash(text);
    cfg.source_path = path.string();
    return cfg;
}

MpcSpec ExperimentConfig::build_spec() const {
    LtiModel model(A, B, Ts);
    if (P) {
        return MpcSpec(std::move(model), N, Q, R, *P, u_lo, u_hi);
    }
    return MpcSpec::with_riccati_terminal(std::move(model), N, Q, R, u_lo, u_hi);
}

}  // namespace certmpc

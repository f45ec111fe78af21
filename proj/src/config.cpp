#include "scarr/config.hpp"

#include <sstream>

#include "scarr/csv.hpp"
#include "scarr/error.hpp"
#include "scarr/text.hpp"

namespace scarr {

namespace {

bool parse_flag(const std::string& where, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

const char* flag(bool b)
{
    return b ? "true" : "false";
}

} // namespace

void apply_predict_option(PredictSettings& p, const std::string& key, const std::string& value)
{
    auto day = [&]() {
        auto v = parse_int(value);
        if (!v || *v < 1)
            throw ConfigError("predict." + key + ": expected a positive day number, got '" + value + "'");
        return static_cast<int>(*v);
    };
    if (key == "first_day")
        p.first_day = day();
    else if (key == "last_day")
        p.last_day = day();
    else if (key == "grid")
        p.grid = parse_flag("predict.grid", value);
    else if (key == "smoothed")
        p.smoothed = parse_flag("predict.smoothed", value);
    else if (key == "mean_only")
        p.mean_only = parse_flag("predict.mean_only", value);
    else
        throw ConfigError("unknown key predict." + key);
}

RunConfig parse_config(const std::string& text, const std::string& origin)
{
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto line = std::string(trim(raw));
        if (line.empty() || line[0] == '#' || line[0] == ';')
            continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(where + ": malformed section header");
            section = std::string(trim(std::string_view(line).substr(1, line.size() - 2)));
            if (section != "simulate" && section != "step1" && section != "step2" && section != "predict")
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected key = value");
        const auto key = std::string(trim(std::string_view(line).substr(0, eq)));
        const auto value = std::string(trim(std::string_view(line).substr(eq + 1)));
        try {
            if (section == "simulate")
                oracle::apply_simulation_option(cfg.simulate, key, value);
            else if (section == "step1")
                step1::apply_step1_option(cfg.step1, key, value);
            else if (section == "step2")
                step2::apply_step2_option(cfg.step2, key, value);
            else if (section == "predict")
                apply_predict_option(cfg.predict, key, value);
            else
                throw ConfigError("key '" + key + "' outside any section");
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    if (cfg.predict.first_day > cfg.predict.last_day)
        throw ConfigError(origin + ": predict.first_day must not exceed predict.last_day");
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ConfigError("config file '" + path.string() + "' does not exist");
    return parse_config(read_text_file(path), path.string());
}

std::string canonical_text(const RunConfig& c)
{
    std::ostringstream os;
    os << "[simulate]\n" << oracle::simulation_config_text(c.simulate);
    const auto& s1 = c.step1;
    os << "[step1]\n";
    os << "error_model=" << step1::to_string(s1.error_kind) << '\n';
    os << "alpha=" << format_number(s1.alpha) << '\n';
    os << "use_elevation=" << flag(s1.use_elevation) << '\n';
    os << "quadrant=" << flag(s1.quadrant) << '\n';
    os << "select=" << flag(s1.select) << '\n';
    os << "landuse_mode=" << (s1.landuse_mode == step1::LanduseMode::combined ? "combined" : "rings") << '\n';
    os << "landuse=";
    for (std::size_t i = 0; i < s1.landuse_categories.size(); ++i)
        os << (i ? "," : "") << kLanduseNames[static_cast<int>(s1.landuse_categories[i])];
    os << '\n';
    os << "radii_km=" << join_numbers(s1.radii.radii_km) << '\n';
    os << "matern_smoothness=" << format_number(s1.matern_smoothness) << '\n';
    os << "collinearity_threshold=" << format_number(s1.collinearity_threshold) << '\n';
    const auto& s2 = c.step2;
    os << "[step2]\n";
    os << "drop_mu_a=" << flag(s2.drop_mu_a) << '\n';
    os << "multistarts=" << s2.multistarts << '\n';
    os << "gradient_tol=" << format_number(s2.gradient_tol) << '\n';
    os << "step_tol=" << format_number(s2.step_tol) << '\n';
    os << "max_iter=" << s2.max_iter << '\n';
    os << "min_days_per_param=" << s2.min_days_per_param << '\n';
    const auto& p = c.predict;
    os << "[predict]\n";
    os << "first_day=" << p.first_day << '\n';
    os << "last_day=" << p.last_day << '\n';
    os << "grid=" << flag(p.grid) << '\n';
    os << "smoothed=" << flag(p.smoothed) << '\n';
    os << "mean_only=" << flag(p.mean_only) << '\n';
    return os.str();
}

std::string config_hash(const RunConfig& cfg)
{
    return hex64(fnv1a64(canonical_text(cfg)));
}

} // namespace scarr

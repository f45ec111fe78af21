#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "scarr/error.hpp"
#include "scarr/step1.hpp"
#include "scarr/text.hpp"

namespace scarr::step1 {

// ---------------------------------------------------------------------------
// Selection

namespace {

// Group 0 is TTV; groups 1..3 are land-use categories in enum order.
std::size_t group_size(const BufferSelection& s, int g)
{
    return g == 0 ? s.ttv_rings : s.landuse_rings[g - 1];
}

void set_group(BufferSelection& s, int g, std::size_t n)
{
    if (g == 0)
        s.ttv_rings = n;
    else
        s.landuse_rings[g - 1] = n;
}

std::string group_name(int g)
{
    return g == 0 ? "ttv" : std::string("lu_") + kLanduseNames[g - 1];
}

StepOneFit selection_fit(const Dataset& ds, const std::vector<CovariateRow>& rows, const Step1Config& cfg,
                         const BufferSelection& sel)
{
    return fit_ols(assemble_design(ds, rows, cfg, sel), {.allow_rank_deficient = true});
}

} // namespace

SelectionResult backward_buffer_selection(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                          const Step1Config& cfg)
{
    SelectionResult out;
    out.retained = cfg.full_selection();
    if (!cfg.select)
        return out;

    for (;;) {
        const StepOneFit full = selection_fit(ds, rows, cfg, out.retained);
        bool dropped = false;
        for (int g = 0; g < 4 && !dropped; ++g) {
            const std::size_t m = group_size(out.retained, g);
            if (m == 0)
                continue;
            // Candidate j drops the outer j rings of the group jointly.
            std::vector<FTest> tests(m);
            std::vector<std::string> errors(m);
#pragma omp parallel for schedule(dynamic)
            for (std::size_t j = 1; j <= m; ++j) {
                BufferSelection cand = out.retained;
                set_group(cand, g, m - j);
                try {
                    tests[j - 1] = f_test(selection_fit(ds, rows, cfg, cand), full);
                } catch (const Error& e) {
                    errors[j - 1] = e.what();
                }
            }
            for (std::size_t j = 1; j <= m; ++j)
                if (!errors[j - 1].empty())
                    throw NumericalError("buffer selection: " + errors[j - 1]);
            for (std::size_t j = m; j >= 1; --j) {
                if (tests[j - 1].p > cfg.alpha) {
                    std::ostringstream msg;
                    msg << "drop " << group_name(g) << " rings " << (m - j + 1) << ".." << m
                        << " F=" << format_number(tests[j - 1].F) << " p=" << format_number(tests[j - 1].p);
                    out.log.push_back(msg.str());
                    set_group(out.retained, g, m - j);
                    dropped = true;
                    break;
                }
            }
        }
        if (!dropped)
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dispersion

StepFunction dispersion_step_function(const StepOneFit& fit, const BufferSpec& radii)
{
    StepFunction sf;
    for (std::size_t k = 0; k < radii.rings(); ++k) {
        const auto name = "ttv_" + radii.ring_label(k);
        auto it = std::find(fit.columns.begin(), fit.columns.end(), name);
        if (it == fit.columns.end())
            break;
        const auto i = static_cast<std::size_t>(it - fit.columns.begin());
        sf.heights.push_back(fit.estimates[static_cast<Eigen::Index>(i)]);
        sf.std_errors.push_back(fit.std_error(i));
    }
    if (sf.heights.empty())
        throw ConfigError("dispersion: no TTV columns retained");
    sf.rings = radii.first(sf.heights.size());
    return sf;
}

Design ttv_only_design(const Dataset& ds, const std::vector<CovariateRow>& rows, const BufferSpec& radii,
                       std::size_t rings, std::optional<Quadrant> quadrant, const std::vector<std::string>& base)
{
    if (rings == 0 || rings > radii.rings())
        throw ConfigError("dispersion: ring count out of range");
    std::vector<std::string> cols;
    for (const auto& c : base)
        if (c.rfind("ttv_", 0) != 0)
            cols.push_back(c);
    for (std::size_t k = 0; k < rings; ++k) {
        std::string name = "ttv_";
        if (quadrant)
            name += std::string(kQuadrantNames[static_cast<int>(*quadrant)]) + "_";
        cols.push_back(name + radii.ring_label(k));
    }
    return assemble_design(ds, rows, cols, radii);
}

namespace {

StepFunction step_function_from(const StepOneFit& fit, const BufferSpec& radii, std::size_t rings)
{
    StepFunction sf;
    sf.rings = radii.first(rings);
    const auto first = static_cast<std::size_t>(fit.p) - rings;
    for (std::size_t k = 0; k < rings; ++k) {
        sf.heights.push_back(fit.estimates[static_cast<Eigen::Index>(first + k)]);
        sf.std_errors.push_back(fit.std_error(first + k));
    }
    return sf;
}

} // namespace

StepFunction isotropic_dispersion(const Dataset& ds, const std::vector<CovariateRow>& rows, const BufferSpec& radii,
                                  std::size_t rings, const std::vector<std::string>& base)
{
    const auto fit = fit_ols(ttv_only_design(ds, rows, radii, rings, std::nullopt, base));
    return step_function_from(fit, radii, rings);
}

std::array<StepFunction, 4> quadrant_dispersion(const Dataset& ds, const std::vector<CovariateRow>& rows,
                                                const BufferSpec& radii, std::size_t rings,
                                                const std::vector<std::string>& base, Exec exec)
{
    std::array<StepFunction, 4> out;
    std::array<std::string, 4> errors;
    auto one = [&](int q) {
        try {
            const auto fit = fit_ols(ttv_only_design(ds, rows, radii, rings, static_cast<Quadrant>(q), base));
            out[q] = step_function_from(fit, radii, rings);
        } catch (const Error& e) {
            errors[q] = std::string(kQuadrantNames[q]) + ": " + e.what();
        }
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for
        for (int q = 0; q < 4; ++q)
            one(q);
    } else {
        for (int q = 0; q < 4; ++q)
            one(q);
    }
    for (const auto& e : errors)
        if (!e.empty())
            throw NumericalError("quadrant dispersion " + e);
    return out;
}

double quadrant_agreement(const std::array<StepFunction, 4>& q, double k)
{
    int agree = 0, total = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
            const auto n = std::min(q[a].heights.size(), q[b].heights.size());
            for (std::size_t r = 0; r < n; ++r) {
                const double se = std::hypot(q[a].std_errors[r], q[b].std_errors[r]);
                agree += std::abs(q[a].heights[r] - q[b].heights[r]) <= k * se ? 1 : 0;
                ++total;
            }
        }
    return total > 0 ? static_cast<double>(agree) / total : 0.0;
}

double additive_bias_c_tilde(const StepOneFit& fit, const SiteCovariates& site, const std::array<double, 4>& season)
{
    double c = 0.0;
    for (std::size_t i = 0; i < fit.columns.size(); ++i) {
        if (fit.columns[i] == "cmaq")
            continue;
        c += fit.estimates[static_cast<Eigen::Index>(i)] * column_value(fit.columns[i], site, season, fit.radii);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Pipeline

Step1Result run_step1(const Dataset& ds, const std::vector<CovariateRow>& rows, const Step1Config& cfg)
{
    cfg.radii.validate();
    if (!(cfg.alpha > 0 && cfg.alpha < 1))
        throw ConfigError("step1: alpha must lie in (0,1)");
    Step1Result res;
    for (const auto& c : landuse_collinearity(ds, rows, cfg.collinearity_threshold)) {
        res.warnings.push_back("land-use aggregates " + c.a + " and " + c.b + " are collinear (r=" +
                               format_number(c.r) + ")");
        const auto has = [&](const std::string& name) {
            return std::any_of(cfg.landuse_categories.begin(), cfg.landuse_categories.end(),
                               [&](LanduseCategory k) { return kLanduseNames[static_cast<int>(k)] == name; });
        };
        if (has(c.a) && has(c.b))
            throw ConfigError("step1: collinear land-use aggregates " + c.a + " and " + c.b +
                              " both configured; name one of them in 'landuse'");
    }

    res.selection = backward_buffer_selection(ds, rows, cfg);
    res.design = assemble_design(ds, rows, cfg, res.selection.retained);
    res.warnings.insert(res.warnings.end(), res.design.warnings.begin(), res.design.warnings.end());

    const StepOneFit ols = fit_ols(res.design);
    res.fit = cfg.error_kind == ErrorKind::independent
                  ? ols
                  : fit_gls(res.design, cfg.error_kind, {.smoothness = cfg.matern_smoothness});
    const auto press = loocv_press(ols, res.design);
    for (int r : press.excluded_rows)
        res.warnings.push_back("PRESS: row " + std::to_string(r) + " (site '" + res.design.row_sites[r] +
                               "') has leverage 1 and was excluded");
    res.fit.press = press.press;
    res.fit.rmspe = press.rmspe;
    res.fit.retained = res.selection.retained;

    if (res.selection.retained.ttv_rings > 0) {
        res.dispersion = dispersion_step_function(res.fit, cfg.radii);
        if (cfg.quadrant)
            res.quadrants = quadrant_dispersion(ds, rows, cfg.radii, res.selection.retained.ttv_rings,
                                                res.fit.columns);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Persistence

Step1Record make_record(const Step1Result& result, const Step1Config& cfg, const std::string& comment)
{
    Step1Record r;
    r.comment = comment;
    r.fit = result.fit;
    r.radii = cfg.radii;
    r.landuse_mode = cfg.landuse_mode;
    r.dispersion = result.dispersion;
    r.quadrants = result.quadrants;
    return r;
}

namespace {

std::string opt_number(const std::optional<double>& v)
{
    return v ? format_number(*v) : "NA";
}

std::string join_strings(const std::vector<std::string>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + v[i];
    return s;
}

std::vector<double> vec(const Eigen::VectorXd& v)
{
    return {v.data(), v.data() + v.size()};
}

void put_step(std::ostringstream& os, const std::string& prefix, const StepFunction& s)
{
    os << prefix << "_heights=" << join_numbers(s.heights) << '\n';
    os << prefix << "_std_errors=" << join_numbers(s.std_errors) << '\n';
}

} // namespace

std::string record_to_text(const Step1Record& r)
{
    const auto& f = r.fit;
    std::ostringstream os;
    if (!r.comment.empty())
        for (const auto& line : split(r.comment, '\n'))
            os << line << '\n';
    os << "format=scarr-step1-fit\n";
    os << "columns=" << join_strings(f.columns) << '\n';
    os << "estimates=" << join_numbers(vec(f.estimates)) << '\n';
    std::vector<double> se;
    for (std::size_t i = 0; i < f.columns.size(); ++i)
        se.push_back(f.std_error(i));
    os << "std_errors=" << join_numbers(se) << '\n';
    std::vector<double> cov;
    for (Eigen::Index i = 0; i < f.covariance.rows(); ++i)
        for (Eigen::Index j = 0; j < f.covariance.cols(); ++j)
            cov.push_back(f.covariance(i, j));
    os << "covariance=" << join_numbers(cov) << '\n';
    os << "error_kind=" << to_string(f.error.kind) << '\n';
    os << "sill=" << format_number(f.error.sill) << '\n';
    os << "range=" << format_number(f.error.range) << '\n';
    os << "nugget=" << format_number(f.error.nugget) << '\n';
    os << "smoothness=" << format_number(f.error.smoothness) << '\n';
    os << "n=" << f.n << '\n';
    os << "p=" << f.p << '\n';
    os << "rank=" << f.rank << '\n';
    os << "rss=" << format_number(f.rss) << '\n';
    os << "tss=" << format_number(f.tss) << '\n';
    os << "r2=" << format_number(f.r2) << '\n';
    os << "adj_r2=" << format_number(f.adj_r2) << '\n';
    os << "rmse=" << format_number(f.rmse) << '\n';
    os << "loglik=" << format_number(f.loglik) << '\n';
    os << "press=" << opt_number(f.press) << '\n';
    os << "rmspe=" << opt_number(f.rmspe) << '\n';
    os << "radii_km=" << join_numbers(r.radii.radii_km) << '\n';
    os << "landuse_mode=" << (r.landuse_mode == LanduseMode::combined ? "combined" : "rings") << '\n';
    os << "retained_ttv_rings=" << f.retained.ttv_rings << '\n';
    for (int c = 0; c < 3; ++c)
        os << "retained_lu_" << kLanduseNames[c] << "_rings=" << f.retained.landuse_rings[c] << '\n';
    if (r.dispersion)
        put_step(os, "dispersion", *r.dispersion);
    if (r.quadrants)
        for (int q = 0; q < 4; ++q)
            put_step(os, std::string("quadrant_") + kQuadrantNames[q], (*r.quadrants)[q]);
    return os.str();
}

namespace {

struct KeyValues {
    std::map<std::string, std::string> kv;

    const std::string& get(const std::string& key) const
    {
        auto it = kv.find(key);
        if (it == kv.end())
            throw DataError("step1 fit: missing key '" + key + "'");
        return it->second;
    }
    bool has(const std::string& key) const { return kv.count(key) > 0; }
    double number(const std::string& key) const
    {
        auto v = parse_double(get(key));
        if (!v)
            throw DataError("step1 fit: bad number for '" + key + "'");
        return *v;
    }
    std::optional<double> opt(const std::string& key) const
    {
        if (get(key) == "NA")
            return std::nullopt;
        return number(key);
    }
    long long integer(const std::string& key) const
    {
        auto v = parse_int(get(key));
        if (!v)
            throw DataError("step1 fit: bad integer for '" + key + "'");
        return *v;
    }
    std::vector<double> list(const std::string& key) const
    {
        const auto& s = get(key);
        if (s.empty())
            return {};
        try {
            return parse_number_list(s);
        } catch (const Error&) {
            throw DataError("step1 fit: bad number list for '" + key + "'");
        }
    }
};

StepFunction get_step(const KeyValues& kv, const std::string& prefix, const BufferSpec& radii)
{
    StepFunction s;
    s.heights = kv.list(prefix + "_heights");
    s.std_errors = kv.list(prefix + "_std_errors");
    if (s.heights.size() != s.std_errors.size() || s.heights.size() > radii.rings())
        throw DataError("step1 fit: inconsistent " + prefix + " step function");
    s.rings = radii.first(s.heights.size());
    return s;
}

} // namespace

Step1Record record_from_text(const std::string& text)
{
    Step1Record r;
    KeyValues kv;
    std::string comment;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        if (line[0] == '#') {
            comment += (comment.empty() ? "" : "\n") + line;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("step1 fit: malformed line '" + line + "'");
        kv.kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    r.comment = comment;
    if (kv.get("format") != "scarr-step1-fit")
        throw DataError("step1 fit: unknown format");
    auto& f = r.fit;
    f.columns = split(kv.get("columns"), ',');
    const auto est = kv.list("estimates");
    const auto cov = kv.list("covariance");
    const auto p = static_cast<Eigen::Index>(f.columns.size());
    if (static_cast<Eigen::Index>(est.size()) != p || static_cast<Eigen::Index>(cov.size()) != p * p)
        throw DataError("step1 fit: estimate/covariance size does not match column count");
    f.estimates = Eigen::Map<const Eigen::VectorXd>(est.data(), p);
    f.covariance.resize(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            f.covariance(i, j) = cov[static_cast<std::size_t>(i * p + j)];
    f.error.kind = parse_error_kind(kv.get("error_kind"));
    f.error.sill = kv.number("sill");
    f.error.range = kv.number("range");
    f.error.nugget = kv.number("nugget");
    f.error.smoothness = kv.number("smoothness");
    f.n = static_cast<int>(kv.integer("n"));
    f.p = static_cast<int>(kv.integer("p"));
    f.rank = static_cast<int>(kv.integer("rank"));
    f.rss = kv.number("rss");
    f.tss = kv.number("tss");
    f.r2 = kv.number("r2");
    f.adj_r2 = kv.number("adj_r2");
    f.rmse = kv.number("rmse");
    f.loglik = kv.number("loglik");
    f.press = kv.opt("press");
    f.rmspe = kv.opt("rmspe");
    r.radii.radii_km = kv.list("radii_km");
    r.radii.validate();
    f.radii = r.radii;
    const auto& mode = kv.get("landuse_mode");
    if (mode != "combined" && mode != "rings")
        throw DataError("step1 fit: bad landuse_mode '" + mode + "'");
    r.landuse_mode = mode == "combined" ? LanduseMode::combined : LanduseMode::rings;
    f.retained.ttv_rings = static_cast<std::size_t>(kv.integer("retained_ttv_rings"));
    for (int c = 0; c < 3; ++c)
        f.retained.landuse_rings[c] =
            static_cast<std::size_t>(kv.integer(std::string("retained_lu_") + kLanduseNames[c] + "_rings"));
    if (kv.has("dispersion_heights"))
        r.dispersion = get_step(kv, "dispersion", r.radii);
    if (kv.has("quadrant_NE_heights")) {
        std::array<StepFunction, 4> q;
        for (int i = 0; i < 4; ++i)
            q[i] = get_step(kv, std::string("quadrant_") + kQuadrantNames[i], r.radii);
        r.quadrants = q;
    }
    return r;
}

namespace {

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw ConfigError("step1." + key + ": expected true/false, got '" + v + "'");
}

double parse_positive(const std::string& key, const std::string& v)
{
    auto d = parse_double(v);
    if (!d || !(*d > 0))
        throw ConfigError("step1." + key + ": expected a positive number, got '" + v + "'");
    return *d;
}

} // namespace

void apply_step1_option(Step1Config& cfg, const std::string& key, const std::string& value)
{
    if (key == "error_model")
        cfg.error_kind = parse_error_kind(value);
    else if (key == "alpha") {
        cfg.alpha = parse_positive(key, value);
        if (cfg.alpha >= 1)
            throw ConfigError("step1.alpha: must lie in (0,1)");
    } else if (key == "use_elevation")
        cfg.use_elevation = parse_bool(key, value);
    else if (key == "quadrant")
        cfg.quadrant = parse_bool(key, value);
    else if (key == "select")
        cfg.select = parse_bool(key, value);
    else if (key == "landuse_mode") {
        if (value == "combined")
            cfg.landuse_mode = LanduseMode::combined;
        else if (value == "rings")
            cfg.landuse_mode = LanduseMode::rings;
        else
            throw ConfigError("step1.landuse_mode: expected combined or rings");
    } else if (key == "landuse") {
        cfg.landuse_categories.clear();
        for (const auto& name : split(value, ','))
            if (!trim(name).empty()) {
                try {
                    cfg.landuse_categories.push_back(parse_landuse_category(std::string(trim(name))));
                } catch (const Error& e) {
                    throw ConfigError(std::string("step1.landuse: ") + e.what());
                }
            }
    } else if (key == "radii_km") {
        try {
            cfg.radii.radii_km = parse_number_list(value);
            cfg.radii.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("step1.radii_km: ") + e.what());
        }
    } else if (key == "matern_smoothness")
        cfg.matern_smoothness = parse_positive(key, value);
    else if (key == "collinearity_threshold")
        cfg.collinearity_threshold = parse_positive(key, value);
    else
        throw ConfigError("unknown key step1." + key);
}

} // namespace scarr::step1

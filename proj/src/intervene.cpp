#include "scotch/intervene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "scotch/datagen.hpp"
#include "scotch/error.hpp"

namespace scotch::intervene {

namespace {

void check_dim(std::size_t d, std::size_t dim, const std::string& what) {
    if (d >= dim)
        throw ValidationError(what + ": dimension " + std::to_string(d) + " out of range for D=" +
                              std::to_string(dim));
}

std::vector<double> parse_numbers(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParseError("intervention key '" + key + "': not a number: " + tok);
        }
    }
    return out;
}

std::vector<std::size_t> parse_indices(const std::string& text, const std::string& key, std::size_t dim) {
    std::vector<std::size_t> out;
    for (double v : parse_numbers(text, key)) {
        if (v < 0 || v != std::floor(v)) throw ParseError("intervention key '" + key + "': bad index");
        out.push_back(static_cast<std::size_t>(v));
        check_dim(out.back(), dim, key);
    }
    return out;
}

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::identity: return "identity";
        case Kind::ordered: return "ordered";
        case Kind::projection: return "projection";
        case Kind::custom: return "custom";
    }
    return "?";
}

Intervention::Intervention(Kind kind, std::size_t dim, Map map, Window window)
    : kind_(kind), dim_(dim), map_(std::move(map)), window_(window) {
    if (dim == 0) throw ValidationError("intervention: dimension must be positive");
    if (!map_) throw ValidationError("intervention: map must be set");
    if (!(window.begin <= window.end)) throw ValidationError("intervention: window begins after it ends");

    const double lo = std::isfinite(window.begin) ? window.begin : (std::isfinite(window.end) ? window.end - 1 : 0);
    const double hi = std::isfinite(window.end) ? window.end : lo + 1;
    Rng rng = make_rng(0, "intervention.probe");
    std::vector<double> z(dim);
    for (std::size_t n = 0; n < kProbes; ++n) {
        const double t = uniform(rng, lo, hi);
        for (double& v : z) v = 5.0 * standard_normal(rng);
        const Vec once = raw(t, z);
        const Vec twice = raw(t, once);
        double err = 0.0;
        for (std::size_t d = 0; d < dim; ++d) err += (twice[d] - once[d]) * (twice[d] - once[d]);
        err = std::sqrt(err);
        if (!(err < kTolerance)) {
            std::ostringstream msg;
            msg << kind_name(kind) << " intervention is not idempotent: |i(i(z)) - i(z)| = " << err
                << " at probe " << n << " (t=" << t << ")";
            throw InterventionError(msg.str());
        }
    }
}

Vec Intervention::raw(double t, std::span<const double> z) const {
    Vec out = map_(t, z);
    if (out.size() != dim_)
        throw DimensionError("intervention returned " + std::to_string(out.size()) + " values, expected " +
                             std::to_string(dim_));
    return out;
}

Vec Intervention::apply(double t, std::span<const double> z) const {
    if (z.size() != dim_) throw DimensionError("intervention: state has wrong dimension");
    if (!active(t)) return Vec(z.begin(), z.end());
    return raw(t, z);
}

Intervention Intervention::identity(std::size_t dim, Window window) {
    return Intervention(Kind::identity, dim, [](double, std::span<const double> z) { return Vec(z.begin(), z.end()); },
                        window);
}

Intervention Intervention::ordered(std::size_t dim, std::vector<Assignment> assignments, Window window) {
    for (const Assignment& a : assignments) {
        check_dim(a.target, dim, "assignment target");
        if (a.source) check_dim(*a.source, dim, "assignment source");
    }
    auto map = [assignments = std::move(assignments)](double, std::span<const double> z) {
        Vec out(z.begin(), z.end());
        for (const Assignment& a : assignments)
            out[a.target] = (a.source ? a.coef * out[*a.source] : 0.0) + a.offset;
        return out;
    };
    return Intervention(Kind::ordered, dim, std::move(map), window);
}

Intervention Intervention::pin(std::size_t dim, const std::vector<std::size_t>& dims,
                               const std::vector<double>& values, Window window) {
    if (dims.size() != values.size()) throw ValidationError("pin: dims and values differ in length");
    std::vector<Assignment> as;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (!std::isfinite(values[i])) throw ValidationError("pin: value must be finite");
        as.push_back({dims[i], std::nullopt, 1.0, values[i]});
    }
    return ordered(dim, std::move(as), window);
}

Intervention Intervention::projection(std::size_t dim, double radius, std::vector<double> center, Window window) {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("projection: radius must be positive");
    if (center.empty()) center.assign(dim, 0.0);
    if (center.size() != dim) throw ValidationError("projection: center has wrong dimension");
    auto map = [radius, center = std::move(center)](double, std::span<const double> z) {
        double norm = 0.0;
        for (std::size_t d = 0; d < z.size(); ++d) norm += (z[d] - center[d]) * (z[d] - center[d]);
        norm = std::sqrt(norm);
        Vec out(z.begin(), z.end());
        if (norm <= radius) return out;
        const double s = radius / norm;
        for (std::size_t d = 0; d < z.size(); ++d) out[d] = center[d] + s * (z[d] - center[d]);
        return out;
    };
    return Intervention(Kind::projection, dim, std::move(map), window);
}

Intervention Intervention::then(const Intervention& next) const {
    if (next.dim_ != dim_) throw DimensionError("intervention composition: dimensions differ");
    const Intervention first = *this;
    auto map = [first, next](double t, std::span<const double> z) {
        const Vec mid = first.apply(t, z);
        return next.apply(t, mid);
    };
    // Active wherever either part is; each part still gates on its own window.
    const Window w{std::min(window_.begin, next.window_.begin), std::max(window_.end, next.window_.end)};
    return Intervention(Kind::custom, dim_, std::move(map), w);
}

sde::Trajectory replay_intervened(const sde::SdeSpec& spec, const Intervention& iv, std::span<const double> z0,
                                  const sde::Array& increments) {
    spec.validate();
    const std::size_t K = spec.steps(), D = spec.dim;
    if (iv.dim() != D) throw DimensionError("intervention and SDE dimensions differ");
    if (z0.size() != D) throw DimensionError("sde: initial state has wrong dimension");
    if (increments.rows() != K || increments.cols() != D)
        throw DimensionError("sde: increments must be " + std::to_string(K) + " x " + std::to_string(D));

    sde::Trajectory tr;
    tr.times.resize(K + 1);
    tr.states = sde::Array({K + 1, D});
    tr.increments = increments;
    std::copy(z0.begin(), z0.end(), tr.states.data().begin());
    tr.times[0] = spec.t0;
    for (std::size_t k = 0; k < K; ++k) {
        const double t_next = spec.time(k + 1);
        Vec next = sde::em_step(spec, tr.state(k), spec.time(k), increments.data().subspan(k * D, D));
        if (iv.active(t_next)) next = iv.apply(t_next, next);
        for (double v : next)
            if (!std::isfinite(v))
                throw DivergenceError("state became non-finite at step " + std::to_string(k + 1),
                                      static_cast<long>(k + 1));
        std::copy(next.begin(), next.end(), tr.states.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * D));
        tr.times[k + 1] = t_next;
    }
    return tr;
}

sde::Trajectory simulate_intervened(const sde::SdeSpec& spec, const Intervention& iv, std::span<const double> z0,
                                    Rng& rng) {
    spec.validate();
    return replay_intervened(spec, iv, z0, sde::draw_increments(spec.steps(), spec.dim, spec.step, rng));
}

sde::SdeSpec drift_intervention(const sde::SdeSpec& spec, const std::vector<std::size_t>& dims,
                                sde::VecFn replacement, Window window) {
    if (!replacement) throw ValidationError("drift intervention: replacement must be set");
    for (std::size_t d : dims) check_dim(d, spec.dim, "drift intervention");
    sde::SdeSpec out = spec;
    out.drift = [base = spec.drift, dims, replacement = std::move(replacement), window](std::span<const double> z,
                                                                                       double t) {
        Vec f = base(z, t);
        if (!window.contains(t)) return f;
        const Vec r = replacement(z, t);
        if (r.size() != f.size()) throw DimensionError("drift intervention: replacement has wrong dimension");
        for (std::size_t d : dims) f[d] = r[d];
        return f;
    };
    return out;
}

Assignment parse_assignment(std::size_t target, const std::string& expr, std::size_t dim) {
    check_dim(target, dim, "assignment target");
    Assignment a;
    a.target = target;
    const std::string s = strip(expr);
    const auto fail = [&] { return ParseError("cannot parse assignment '" + expr + "'"); };
    if (s.empty()) throw fail();

    const auto zpos = s.find('z');
    if (zpos == std::string::npos) {
        const auto v = parse_numbers(s, "assign." + std::to_string(target));
        if (v.size() != 1) throw fail();
        a.offset = v[0];
        return a;
    }
    std::string coef = strip(s.substr(0, zpos));
    if (!coef.empty()) {
        if (coef == "-") {
            a.coef = -1.0;
        } else {
            if (coef.back() != '*') throw fail();
            const auto v = parse_numbers(coef.substr(0, coef.size() - 1), "assign." + std::to_string(target));
            if (v.size() != 1) throw fail();
            a.coef = v[0];
        }
    }
    std::size_t pos = zpos + 1, end = pos;
    while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    if (end == pos) throw fail();
    a.source = std::stoul(s.substr(pos, end - pos));
    check_dim(*a.source, dim, "assignment source");
    std::string rest = strip(s.substr(end));
    if (!rest.empty()) {
        const char op = rest[0];
        if (op != '+' && op != '-') throw fail();
        const auto v = parse_numbers(rest.substr(1), "assign." + std::to_string(target));
        if (v.size() != 1) throw fail();
        a.offset = op == '+' ? v[0] : -v[0];
    }
    return a;
}

Intervention load_intervention(const std::filesystem::path& path, std::size_t dim) {
    const auto kv = data::load_key_values(path);
    const auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ParseError(path.string() + ": missing key '" + key + "'");
        return it->second;
    };
    Window w;
    if (kv.count("window")) {
        const auto v = parse_numbers(kv.at("window"), "window");
        if (v.size() != 2) throw ParseError(path.string() + ": window needs two numbers");
        w = {v[0], v[1]};
    }
    const std::string kind = get("kind");
    if (kind == "identity") return Intervention::identity(dim, w);
    if (kind == "pin") return Intervention::pin(dim, parse_indices(get("dims"), "dims", dim),
                                                parse_numbers(get("values"), "values"), w);
    if (kind == "projection") {
        const auto r = parse_numbers(get("radius"), "radius");
        if (r.size() != 1) throw ParseError(path.string() + ": radius needs one number");
        std::vector<double> center;
        if (kv.count("center")) center = parse_numbers(kv.at("center"), "center");
        return Intervention::projection(dim, r[0], center, w);
    }
    if (kind == "ordered") {
        std::map<std::size_t, std::string> exprs;
        for (const auto& [key, value] : kv) {
            if (key.rfind("assign.", 0) != 0) continue;
            const auto idx = parse_indices(key.substr(7), key, dim);
            if (idx.size() != 1) throw ParseError(path.string() + ": bad key '" + key + "'");
            exprs[idx[0]] = value;
        }
        std::vector<std::size_t> order;
        if (kv.count("order")) {
            order = parse_indices(kv.at("order"), "order", dim);
        } else {
            for (const auto& [d, e] : exprs) order.push_back(d);
        }
        std::vector<Assignment> as;
        for (std::size_t d : order) {
            const auto it = exprs.find(d);
            if (it == exprs.end()) throw ParseError(path.string() + ": order names z" + std::to_string(d) +
                                                    " without an assign." + std::to_string(d));
            as.push_back(parse_assignment(d, it->second, dim));
        }
        if (as.empty()) throw ParseError(path.string() + ": ordered intervention without assignments");
        return Intervention::ordered(dim, std::move(as), w);
    }
    throw ParseError(path.string() + ": unknown intervention kind '" + kind + "'");
}

}  // namespace scotch::intervene

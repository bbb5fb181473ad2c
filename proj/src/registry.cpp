#include "pentropy/registry.hpp"

#include <cmath>
#include <sstream>

namespace pentropy {

MapSystem make_doubling() { return make_power(2); }

MapSystem make_power(int d) {
    if (d < 1) raise(ErrorKind::ValidationError, "power:d needs d >= 1");
    MapSystem s;
    s.name = d == 2 ? "doubling" : "power:" + std::to_string(d);
    s.k = 1;
    s.mode = Mode::Complex;
    s.atlas = single_box_atlas(1, 8.0, Mode::Complex);
    s.degree = d;
    s.evaluate_rule = [d](const CVec& p) {
        CVec out(1);
        out[0] = std::pow(p[0], d);
        return out;
    };
    s.differential_rule = [d](const CVec& p) {
        CMat j(1, 1);
        j(0, 0) = static_cast<double>(d) * std::pow(p[0], d - 1);
        return j;
    };
    if (d >= 2) {
        s.inverse_rule = [d](const CVec& p) {
            std::vector<CVec> out;
            double r = std::pow(std::abs(p[0]), 1.0 / d);
            double theta = std::arg(p[0]);
            for (int j = 0; j < d; ++j) {
                CVec y(1);
                y[0] = std::polar(r, (theta + 2.0 * M_PI * j) / d);
                out.push_back(y);
            }
            return out;
        };
        // Critical point at the origin only.
        s.singular_distance_rule = [](const CVec& p) { return std::abs(p[0]); };
    } else {
        s.inverse_rule = [](const CVec& p) { return std::vector<CVec>{p}; };
        s.singular_distance_rule = nullptr;
    }
    s.sampler = d >= 2 ? SamplerHint::BackwardCloud : SamplerHint::BoxLattice;
    s.basin_point = CVec::Constant(1, Complex(1.0, 0.0));
    s.sampling_radius = 1.3;
    if (d >= 2) {
        s.reference.h_top = std::log(static_cast<double>(d));
        s.reference.h_mu = std::log(static_cast<double>(d));
        s.reference.exponents = {std::log(static_cast<double>(d))};
    } else {
        s.reference.h_top = 0.0;
        s.reference.h_mu = 0.0;
        s.reference.exponents = {0.0};
    }
    return s;
}

MapSystem make_henon(Complex c, Complex b) {
    if (std::abs(b) == 0.0) raise(ErrorKind::ValidationError, "henon:c,b needs b != 0");
    MapSystem s;
    std::ostringstream name;
    name << "henon:" << c.real() << "," << b.real();
    s.name = name.str();
    s.k = 2;
    s.mode = Mode::Complex;
    s.atlas = single_box_atlas(2, 16.0, Mode::Complex);
    s.degree = 1;
    s.evaluate_rule = [c, b](const CVec& p) {
        CVec out(2);
        out[0] = p[1] + p[0] * p[0] + c;
        out[1] = b * p[0];
        return out;
    };
    s.differential_rule = [b](const CVec& p) {
        CMat j(2, 2);
        j(0, 0) = 2.0 * p[0];
        j(0, 1) = 1.0;
        j(1, 0) = b;
        j(1, 1) = 0.0;
        return j;
    };
    // Polynomial automorphism: the closed-form inverse is the single branch.
    s.inverse_rule = [c, b](const CVec& p) {
        CVec y(2);
        y[0] = p[1] / b;
        y[1] = p[0] - y[0] * y[0] - c;
        return std::vector<CVec>{y};
    };
    s.singular_distance_rule = nullptr; // A is empty: det Df = -b everywhere
    s.sampler = SamplerHint::ForwardOrbit;
    s.basin_point = CVec::Zero(2);
    s.basin_point[0] = Complex(0.1, 0.0);
    s.basin_point[1] = Complex(0.1, 0.0);
    s.sampling_radius = 2.0;
    return s;
}

MapSystem make_cat() {
    MapSystem s;
    s.name = "cat";
    s.k = 2;
    s.mode = Mode::Real;
    s.atlas = torus_atlas(2, 1.0, Mode::Real);
    s.degree = 1;
    CMat m(2, 2), minv(2, 2);
    m << 2.0, 1.0, 1.0, 1.0;
    minv << 1.0, -1.0, -1.0, 2.0;
    s.evaluate_rule = [m](const CVec& p) { return CVec(m * p); };
    s.differential_rule = [m](const CVec&) { return m; };
    s.inverse_rule = [minv](const CVec& p) { return std::vector<CVec>{CVec(minv * p)}; };
    s.singular_distance_rule = nullptr;
    s.sampler = SamplerHint::BoxLattice;
    s.basin_point = CVec::Zero(2);
    s.basin_point[0] = Complex(0.2137, 0.0);
    s.basin_point[1] = Complex(0.5821, 0.0);
    s.sampling_radius = 1.0;
    const double lambda = (3.0 + std::sqrt(5.0)) / 2.0;
    s.reference.h_top = std::log(lambda);
    s.reference.h_mu = std::log(lambda);
    s.reference.exponents = {std::log(lambda), -std::log(lambda)};
    return s;
}

MapSystem make_product(const MapSystem& a, const MapSystem& b) {
    if (a.mode != b.mode)
        raise(ErrorKind::ValidationError, "product factors must share the mode");
    MapSystem s;
    s.name = "product:" + a.name + "x" + b.name;
    s.k = a.k + b.k;
    s.mode = a.mode;

    // Factor atlases are single-chart for all built-ins.
    Chart ca = a.atlas.charts.front(), cb = b.atlas.charts.front();
    Chart c;
    c.half_width = ca.half_width;
    c.half_width.insert(c.half_width.end(), cb.half_width.begin(), cb.half_width.end());
    c.period = ca.period;
    c.period.insert(c.period.end(), cb.period.begin(), cb.period.end());
    s.atlas.charts.push_back(c);
    s.atlas.mode = s.mode;

    const int ka = a.k, kb = b.k;
    auto split = [ka, kb](const CVec& p) {
        return std::make_pair(CVec(p.head(ka)), CVec(p.tail(kb)));
    };
    auto eval_a = a.evaluate_rule, eval_b = b.evaluate_rule;
    s.evaluate_rule = [split, eval_a, eval_b, ka, kb](const CVec& p) {
        auto [pa, pb] = split(p);
        CVec out(ka + kb);
        out.head(ka) = eval_a(pa);
        out.tail(kb) = eval_b(pb);
        return out;
    };
    auto diff_a = a.differential_rule, diff_b = b.differential_rule;
    s.differential_rule = [split, diff_a, diff_b, ka, kb](const CVec& p) {
        auto [pa, pb] = split(p);
        CMat j = CMat::Zero(ka + kb, ka + kb);
        j.topLeftCorner(ka, ka) = diff_a(pa);
        j.bottomRightCorner(kb, kb) = diff_b(pb);
        return j;
    };
    if (a.has_inverse() && b.has_inverse()) {
        auto inv_a = a.inverse_rule, inv_b = b.inverse_rule;
        s.inverse_rule = [split, inv_a, inv_b, ka, kb](const CVec& p) {
            auto [pa, pb] = split(p);
            std::vector<CVec> out;
            for (const CVec& ya : inv_a(pa))
                for (const CVec& yb : inv_b(pb)) {
                    CVec y(ka + kb);
                    y.head(ka) = ya;
                    y.tail(kb) = yb;
                    out.push_back(y);
                }
            return out;
        };
    }
    auto sda = a.singular_distance_rule, sdb = b.singular_distance_rule;
    if (sda || sdb) {
        s.singular_distance_rule = [split, sda, sdb](const CVec& p) {
            auto [pa, pb] = split(p);
            double d = std::numeric_limits<double>::infinity();
            if (sda) d = std::min(d, sda(pa));
            if (sdb) d = std::min(d, sdb(pb));
            return d;
        };
    }
    s.degree = a.degree * b.degree;
    s.sampler = a.sampler;
    s.basin_point = CVec(s.k);
    s.basin_point.head(ka) = a.basin_point;
    s.basin_point.tail(kb) = b.basin_point;
    s.sampling_radius = std::max(a.sampling_radius, b.sampling_radius);
    if (a.reference.h_top && b.reference.h_top)
        s.reference.h_top = *a.reference.h_top + *b.reference.h_top;
    if (a.reference.h_mu && b.reference.h_mu)
        s.reference.h_mu = *a.reference.h_mu + *b.reference.h_mu;
    return s;
}

MapSystem make_coordinate_polynomial(const std::vector<Polynomial>& per_coordinate, Mode mode) {
    const int k = static_cast<int>(per_coordinate.size());
    if (k == 0) raise(ErrorKind::ValidationError, "polynomial system needs >= 1 coordinate");
    for (const Polynomial& p : per_coordinate)
        if (p.degree() < 1)
            raise(ErrorKind::ValidationError, "each coordinate polynomial needs degree >= 1");
    MapSystem s;
    s.name = "poly";
    s.k = k;
    s.mode = mode;
    s.atlas = single_box_atlas(k, 64.0, mode);
    s.evaluate_rule = [per_coordinate, k](const CVec& p) {
        CVec out(k);
        for (int j = 0; j < k; ++j) out[j] = per_coordinate[static_cast<size_t>(j)].eval(p[j]);
        return out;
    };
    s.differential_rule = [per_coordinate, k](const CVec& p) {
        CMat j = CMat::Zero(k, k);
        for (int i = 0; i < k; ++i) j(i, i) = per_coordinate[static_cast<size_t>(i)].derivative(p[i]);
        return j;
    };
    s.inverse_rule = [per_coordinate, k](const CVec& p) {
        std::vector<std::vector<Complex>> roots(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j)
            roots[static_cast<size_t>(j)] = solve_roots(per_coordinate[static_cast<size_t>(j)], p[j]);
        std::vector<CVec> out;
        std::vector<size_t> idx(static_cast<size_t>(k), 0);
        while (true) {
            CVec y(k);
            for (int j = 0; j < k; ++j) y[j] = roots[static_cast<size_t>(j)][idx[static_cast<size_t>(j)]];
            out.push_back(y);
            int j = k - 1;
            while (j >= 0 && ++idx[static_cast<size_t>(j)] == roots[static_cast<size_t>(j)].size()) {
                idx[static_cast<size_t>(j)] = 0;
                --j;
            }
            if (j < 0) break;
        }
        return out;
    };
    // A = zeros of the diagonal derivative product (critical set).
    s.singular_distance_rule = nullptr;
    int degree = 1;
    for (const Polynomial& p : per_coordinate) degree *= p.degree();
    s.degree = degree;
    bool nonlinear = false;
    for (const Polynomial& p : per_coordinate) nonlinear |= p.degree() >= 2;
    if (nonlinear) {
        auto polys = per_coordinate;
        s.singular_distance_rule = [polys](const CVec& p) {
            double d = std::numeric_limits<double>::infinity();
            for (size_t j = 0; j < polys.size(); ++j) {
                if (polys[j].degree() < 2) continue;
                // Distance to the nearest critical point of coordinate j.
                Polynomial dp;
                dp.coeffs.assign(polys[j].coeffs.begin() + 1, polys[j].coeffs.end());
                for (size_t i = 0; i < dp.coeffs.size(); ++i) dp.coeffs[i] *= static_cast<double>(i + 1);
                for (Complex root : solve_roots(dp, Complex(0.0, 0.0)))
                    d = std::min(d, std::abs(p[static_cast<Eigen::Index>(j)] - root));
            }
            return d;
        };
    }
    s.sampler = SamplerHint::BoxLattice;
    s.basin_point = CVec::Constant(k, Complex(0.5, 0.0));
    s.sampling_radius = 1.3;
    return s;
}

static std::vector<Polynomial> parse_poly_lists(const std::string& body) {
    std::vector<Polynomial> polys;
    std::stringstream per_coord(body);
    std::string coord;
    while (std::getline(per_coord, coord, ';')) {
        Polynomial p;
        std::stringstream cs(coord);
        std::string tok;
        while (std::getline(cs, tok, ',')) {
            try {
                p.coeffs.push_back(Complex(std::stod(tok), 0.0));
            } catch (const std::exception&) {
                raise(ErrorKind::ValidationError, "bad polynomial coefficient '" + tok + "'");
            }
        }
        polys.push_back(p);
    }
    return polys;
}

MapSystem make_system(const std::string& spec) {
    if (spec == "doubling") return make_doubling();
    if (spec == "cat") return make_cat();
    if (spec.rfind("power:", 0) == 0) {
        try {
            return make_power(std::stoi(spec.substr(6)));
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            raise(ErrorKind::ValidationError, "bad degree in '" + spec + "'");
        }
    }
    if (spec.rfind("henon:", 0) == 0) {
        std::string body = spec.substr(6);
        size_t comma = body.find(',');
        if (comma == std::string::npos)
            raise(ErrorKind::ValidationError, "henon:c,b needs two parameters");
        try {
            double c = std::stod(body.substr(0, comma));
            double b = std::stod(body.substr(comma + 1));
            return make_henon(Complex(c, 0.0), Complex(b, 0.0));
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            raise(ErrorKind::ValidationError, "bad parameters in '" + spec + "'");
        }
    }
    if (spec.rfind("poly:", 0) == 0)
        return make_coordinate_polynomial(parse_poly_lists(spec.substr(5)), Mode::Complex);
    if (spec.rfind("product:", 0) == 0) {
        std::string body = spec.substr(8);
        // The separator is an 'x' between two valid system specs; try split
        // positions left to right.
        for (size_t pos = body.find('x'); pos != std::string::npos; pos = body.find('x', pos + 1)) {
            std::string left = body.substr(0, pos), right = body.substr(pos + 1);
            try {
                MapSystem a = make_system(left);
                MapSystem b = make_system(right);
                return make_product(a, b);
            } catch (const Error&) {
                continue;
            }
        }
        raise(ErrorKind::ValidationError, "cannot split product spec '" + spec + "'");
    }
    std::string names;
    for (const std::string& n : registry_names()) names += (names.empty() ? "" : ", ") + n;
    raise(ErrorKind::ValidationError, "unknown system '" + spec + "'; registry: " + names);
}

std::vector<std::string> registry_names() {
    return {"doubling", "power:d", "henon:c,b", "cat", "product:<sys>x<sys>", "poly:c0,c1,..;.."};
}

} // namespace pentropy

#include "pentropy/graph_patch.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "pentropy/error.hpp"

namespace pentropy {

CVec GraphPatch::value(const CVec& x) const {
    if (k == l) return CVec(0);
    return values(x);
}

CVec GraphPatch::ambient(const CVec& x) const {
    CVec p = anchor;
    if (l > 0) p += base * x;
    if (k > l) p += complement * value(x);
    return p;
}

// Per-axis 1-D sample sets. Complex axes use rings x angles with the center
// included once; real axes an odd uniform grid.
static std::vector<Complex> axis_samples(Mode mode, double radius, int g) {
    std::vector<Complex> out;
    if (mode == Mode::Complex) {
        int ntheta = std::max(8, (g / 4) * 4);
        int nrings = std::max(2, g / 4);
        out.push_back(Complex(0.0, 0.0));
        for (int t = 1; t <= nrings; ++t) {
            double r = radius * t / nrings;
            for (int a = 0; a < ntheta; ++a)
                out.push_back(std::polar(r, 2.0 * M_PI * a / ntheta));
        }
    } else {
        int count = g | 1; // odd: center node present
        for (int i = 0; i < count; ++i)
            out.push_back(Complex(-radius + 2.0 * radius * i / (count - 1), 0.0));
    }
    return out;
}

static std::vector<Complex> axis_audit_samples(Mode mode, double radius) {
    std::vector<Complex> out;
    out.push_back(Complex(0.0, 0.0));
    if (mode == Mode::Complex) {
        for (int a = 0; a < 8; ++a) out.push_back(std::polar(radius, 2.0 * M_PI * a / 8));
        for (int a = 0; a < 4; ++a)
            out.push_back(std::polar(0.5 * radius, 2.0 * M_PI * (a + 0.5) / 4));
    } else {
        out.push_back(Complex(radius, 0.0));
        out.push_back(Complex(-radius, 0.0));
        out.push_back(Complex(0.5 * radius, 0.0));
        out.push_back(Complex(-0.5 * radius, 0.0));
    }
    return out;
}

static std::vector<CVec> tensor_nodes(const std::vector<std::vector<Complex>>& axes) {
    std::vector<CVec> out;
    const int l = static_cast<int>(axes.size());
    if (l == 0) {
        out.push_back(CVec(0));
        return out;
    }
    std::vector<size_t> idx(static_cast<size_t>(l), 0);
    while (true) {
        CVec x(l);
        for (int j = 0; j < l; ++j) x[j] = axes[static_cast<size_t>(j)][idx[static_cast<size_t>(j)]];
        out.push_back(x);
        int j = l - 1;
        while (j >= 0 && ++idx[static_cast<size_t>(j)] == axes[static_cast<size_t>(j)].size()) {
            idx[static_cast<size_t>(j)] = 0;
            --j;
        }
        if (j < 0) break;
    }
    return out;
}

std::vector<CVec> GraphPatch::base_nodes() const {
    std::vector<std::vector<Complex>> axes;
    for (int j = 0; j < l; ++j)
        axes.push_back(axis_samples(mode, radii[static_cast<size_t>(j)], grid_resolution));
    return tensor_nodes(axes);
}

std::vector<CVec> GraphPatch::audit_base_nodes() const {
    std::vector<std::vector<Complex>> axes;
    for (int j = 0; j < l; ++j) axes.push_back(axis_audit_samples(mode, radii[static_cast<size_t>(j)]));
    return tensor_nodes(axes);
}

std::vector<CVec> GraphPatch::ambient_nodes() const {
    std::vector<CVec> out;
    for (const CVec& x : base_nodes()) out.push_back(ambient(x));
    return out;
}

std::vector<CVec> GraphPatch::ambient_audit_nodes() const {
    std::vector<CVec> out;
    for (const CVec& x : audit_base_nodes()) out.push_back(ambient(x));
    return out;
}

double GraphPatch::sampled_lip() const {
    if (l == 0 || k == l) return 0.0;
    std::vector<CVec> nodes = base_nodes();
    std::vector<CVec> vals;
    vals.reserve(nodes.size());
    for (const CVec& x : nodes) vals.push_back(value(x));
    double lip = 0.0;
    for (size_t i = 0; i < nodes.size(); ++i)
        for (size_t j = i + 1; j < nodes.size(); ++j) {
            double dx = max_norm(CVec(nodes[i] - nodes[j]));
            if (dx < 1e-14) continue;
            lip = std::max(lip, max_norm(CVec(vals[i] - vals[j])) / dx);
        }
    return lip;
}

GraphPatch point_patch(const CVec& anchor, int k, Mode mode, double delta) {
    GraphPatch p;
    p.mode = mode;
    p.k = k;
    p.l = 0;
    p.anchor = anchor;
    p.base = CMat(k, 0);
    p.complement = CMat::Identity(k, k);
    p.lip_bound = 0.0;
    p.nominal_delta = delta;
    p.values = [k](const CVec&) { return CVec(CVec::Zero(k)); };
    p.affine = AffineValues{CVec::Zero(k), CMat(k, 0)};
    return p;
}

GraphPatch flat_patch(const CVec& anchor, const CMat& base, const CMat& complement,
                      const std::vector<double>& radii, Mode mode) {
    GraphPatch p;
    p.mode = mode;
    p.k = static_cast<int>(base.rows());
    p.l = static_cast<int>(base.cols());
    p.anchor = anchor;
    p.base = base;
    p.complement = complement;
    p.radii = radii;
    p.lip_bound = 0.0;
    const int c = p.k - p.l;
    p.values = [c](const CVec&) { return CVec(CVec::Zero(c)); };
    p.affine = AffineValues{CVec::Zero(c), CMat::Zero(c, p.l)};
    return p;
}

GraphPatch ball_patch(const CVec& anchor, int k, Mode mode, double radius) {
    GraphPatch p = flat_patch(anchor, CMat::Identity(k, k), CMat(k, 0),
                              std::vector<double>(static_cast<size_t>(k), radius), mode);
    p.values = [](const CVec&) { return CVec(0); };
    p.affine = AffineValues{CVec(0), CMat(0, k)};
    return p;
}

GraphPatch block_graph(int k1, int k2, Mode mode, const std::vector<double>& radii,
                       double lip_bound, Evaluator values, std::optional<AffineValues> affine) {
    GraphPatch p;
    p.mode = mode;
    p.k = k1 + k2;
    p.l = k1;
    p.anchor = CVec::Zero(p.k);
    p.base = CMat::Zero(p.k, k1);
    p.base.topRows(k1) = CMat::Identity(k1, k1);
    p.complement = CMat::Zero(p.k, k2);
    p.complement.bottomRows(k2) = CMat::Identity(k2, k2);
    p.radii = radii;
    p.lip_bound = lip_bound;
    p.values = std::move(values);
    p.affine = std::move(affine);
    return p;
}

GraphPatch stable_block_graph(int k1, int k2, Mode mode, const std::vector<double>& radii,
                              double lip_bound, Evaluator values,
                              std::optional<AffineValues> affine) {
    GraphPatch p;
    p.mode = mode;
    p.k = k1 + k2;
    p.l = k2;
    p.anchor = CVec::Zero(p.k);
    p.base = CMat::Zero(p.k, k2);
    p.base.bottomRows(k2) = CMat::Identity(k2, k2);
    p.complement = CMat::Zero(p.k, k1);
    p.complement.topRows(k1) = CMat::Identity(k1, k1);
    p.radii = radii;
    p.lip_bound = lip_bound;
    p.values = std::move(values);
    p.affine = std::move(affine);
    return p;
}

bool qualifies_target_class(const GraphPatch& p, double tol) {
    if (p.lip_bound > 1.0 + tol) return false;
    if (p.l < p.k && max_norm(p.center_value()) > tol) return false;
    return true;
}

bool qualifies_preimage_class(const GraphPatch& p, double delta, int n, double tol) {
    if (p.lip_bound > 1.0 + tol) return false;
    double want = std::exp(-delta * n);
    for (double r : p.radii)
        if (std::abs(r - want) > tol * std::max(1.0, want)) return false;
    if (!p.admissibility.filled) return false;
    return p.admissibility.min_singular > 0.0;
}

GraphPatch cutoff(const GraphPatch& graph, double radius) {
    double rmax = 0.0;
    for (double r : graph.radii) rmax = std::max(rmax, r);
    if (graph.l > 0 && radius > rmax * (1.0 + 1e-12))
        raise(ErrorKind::RadiusTooLarge, "cutoff radius exceeds the patch radius");
    GraphPatch out = graph;
    for (double& r : out.radii) r = std::min(r, radius);
    return out;
}

GraphPatch slice_graph(const GraphPatch& w) {
    if (w.l == 0) raise(ErrorKind::ZeroDimensional, "cannot slice a point patch");
    GraphPatch out = w;
    out.l = w.l - 1;
    out.base = w.base.leftCols(out.l);
    CMat moved = w.base.rightCols(1);
    out.complement = CMat(w.k, w.k - out.l);
    out.complement.leftCols(1) = moved;
    out.complement.rightCols(w.k - w.l) = w.complement;
    out.radii = std::vector<double>(w.radii.begin(), w.radii.end() - 1);
    Evaluator inner = w.values;
    const int l_old = w.l, k = w.k;
    out.values = [inner, l_old, k](const CVec& xp) {
        CVec x = CVec::Zero(l_old);
        x.head(l_old - 1) = xp;
        CVec v = (k == l_old) ? CVec(0) : inner(x);
        CVec res(v.size() + 1);
        res[0] = Complex(0.0, 0.0); // the fixed coordinate, offset from center
        res.tail(v.size()) = v;
        return res;
    };
    if (w.affine) {
        AffineValues a;
        a.c = CVec(w.affine->c.size() + 1);
        a.c[0] = Complex(0.0, 0.0);
        a.c.tail(w.affine->c.size()) = w.affine->c;
        a.L = CMat::Zero(w.affine->L.rows() + 1, out.l);
        a.L.bottomRows(w.affine->L.rows()) = w.affine->L.leftCols(out.l);
        out.affine = a;
    }
    return out;
}

GraphPatch extend_graph(const GraphPatch& delta_patch) {
    const GraphPatch& d = delta_patch;
    if (d.l == d.k) raise(ErrorKind::FullDimensional, "cannot extend a full-dimensional patch");
    GraphPatch out = d;
    out.l = d.l + 1;
    out.base = CMat(d.k, out.l);
    out.base.leftCols(d.l) = d.base;
    out.base.rightCols(1) = d.complement.leftCols(1);
    out.complement = d.complement.rightCols(d.k - out.l);
    double new_radius = d.radii.empty() ? d.nominal_delta : d.radii.front();
    if (new_radius <= 0.0) new_radius = d.nominal_delta > 0 ? d.nominal_delta : 1.0;
    out.radii = d.radii;
    out.radii.push_back(new_radius);
    Evaluator inner = d.values;
    const int l_old = d.l;
    out.values = [inner, l_old](const CVec& xp) {
        CVec v = inner(CVec(xp.head(l_old)));
        return CVec(v.tail(v.size() - 1));
    };
    if (d.affine) {
        AffineValues a;
        a.c = d.affine->c.tail(d.affine->c.size() - 1);
        a.L = CMat::Zero(d.affine->L.rows() - 1, out.l);
        a.L.leftCols(d.l) = d.affine->L.bottomRows(d.affine->L.rows() - 1);
        out.affine = a;
    }
    double resid = containment_residual(d, out);
    if (resid > 1e-9)
        raise(ErrorKind::ValidationError,
              "extension containment residual " + std::to_string(resid));
    return out;
}

double containment_residual(const GraphPatch& inner, const GraphPatch& outer) {
    double worst = 0.0;
    for (const CVec& x : inner.base_nodes()) {
        CVec p = inner.ambient(x);
        CVec rel = p - outer.anchor;
        CVec xb = outer.base.adjoint() * rel;
        CVec predicted = outer.ambient(xb);
        worst = std::max(worst, max_norm(CVec(p - predicted)));
    }
    return worst;
}

double patch_point_distance(const GraphPatch& p, const CVec& point, const Atlas& atlas) {
    CVec rel = atlas.displacement(point, p.anchor);
    CVec xb = p.l > 0 ? CVec(p.base.adjoint() * rel) : CVec(0);
    double excess = 0.0;
    for (int j = 0; j < p.l; ++j)
        excess = std::max(excess, std::abs(xb[j]) - p.radii[static_cast<size_t>(j)]);
    CVec clamped = xb;
    for (int j = 0; j < p.l; ++j) {
        double m = std::abs(clamped[j]);
        double r = p.radii[static_cast<size_t>(j)];
        if (m > r) clamped[j] *= r / m;
    }
    CVec on_graph = p.ambient(clamped);
    double mismatch = max_norm(CVec(rel - (on_graph - p.anchor)));
    return std::max(excess, mismatch);
}

// ---------------------------------------------------------------------------
// Volume quadrature

static void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<size_t>(n), 0.0);
    w.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
            }
            double dp = n * (t * p0 - p1) / (t * t - 1.0);
            double dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
        }
        double dp = n * (t * p0 - p1) / (t * t - 1.0);
        x[static_cast<size_t>(i)] = t;
        w[static_cast<size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

static CMat value_jacobian(const GraphPatch& p, const CVec& x, double h) {
    const int c = p.k - p.l;
    CMat j(c, p.l);
    if (p.affine) return p.affine->L;
    for (int col = 0; col < p.l; ++col) {
        CVec hi = x, lo = x;
        hi[col] += h;
        lo[col] -= h;
        j.col(col) = (p.value(hi) - p.value(lo)) / (2.0 * h);
    }
    return j;
}

double graph_volume(const GraphPatch& w) {
    if (w.grid_resolution < 8)
        raise(ErrorKind::ResolutionTooLow, "graph_volume needs grid resolution >= 8 per axis");
    if (w.l == 0) return 1.0;

    // Per-axis quadrature nodes: complex axes use Gauss-Legendre in the radius
    // against trapezoid in angle (spectrally accurate on the disk); real axes
    // plain Gauss-Legendre.
    struct Node {
        Complex z;
        double weight;
    };
    const int nrad = std::max(16, w.grid_resolution);
    const int ntheta = std::max(32, 2 * w.grid_resolution);
    std::vector<double> gx, gw;
    gauss_legendre(nrad, gx, gw);

    std::vector<std::vector<Node>> axes;
    for (int j = 0; j < w.l; ++j) {
        double r = w.radii[static_cast<size_t>(j)];
        std::vector<Node> nodes;
        if (w.mode == Mode::Complex) {
            for (int a = 0; a < nrad; ++a) {
                double t = 0.5 * (gx[static_cast<size_t>(a)] + 1.0) * r;
                double wt = 0.5 * r * gw[static_cast<size_t>(a)] * t; // polar factor
                for (int b = 0; b < ntheta; ++b) {
                    double th = 2.0 * M_PI * b / ntheta;
                    nodes.push_back({std::polar(t, th), wt * 2.0 * M_PI / ntheta});
                }
            }
        } else {
            for (int a = 0; a < nrad; ++a) {
                double t = gx[static_cast<size_t>(a)] * r;
                nodes.push_back({Complex(t, 0.0), gw[static_cast<size_t>(a)] * r});
            }
        }
        axes.push_back(std::move(nodes));
    }

    double h = 1e-6 * w.radius();
    if (h <= 0) h = 1e-8;
    double total = 0.0;
    std::vector<size_t> idx(static_cast<size_t>(w.l), 0);
    while (true) {
        CVec x(w.l);
        double wt = 1.0;
        for (int j = 0; j < w.l; ++j) {
            const Node& nd = axes[static_cast<size_t>(j)][idx[static_cast<size_t>(j)]];
            x[j] = nd.z;
            wt *= nd.weight;
        }
        double factor = 1.0;
        if (w.k > w.l) {
            CMat jac = value_jacobian(w, x, h);
            if (w.mode == Mode::Complex) {
                CMat gram = CMat::Identity(w.l, w.l) + jac.adjoint() * jac;
                factor = gram.determinant().real();
            } else {
                CMat gram = CMat::Identity(w.l, w.l) + jac.transpose() * jac;
                factor = std::sqrt(std::abs(gram.determinant().real()));
            }
        }
        total += wt * factor;
        int j = w.l - 1;
        while (j >= 0 && ++idx[static_cast<size_t>(j)] == axes[static_cast<size_t>(j)].size()) {
            idx[static_cast<size_t>(j)] = 0;
            --j;
        }
        if (j < 0) break;
    }
    return total;
}

double check_local_injectivity(const Evaluator& g, int k, double radius) {
    auto dg = [&](const CVec& z) {
        CMat j(k, k);
        double h = std::max(1e-7, 1e-6 * radius);
        for (int col = 0; col < k; ++col) {
            CVec hi = z, lo = z;
            hi[col] += h;
            lo[col] -= h;
            j.col(col) = (g(hi) - g(lo)) / (2.0 * h);
        }
        return j;
    };
    CMat dg0 = dg(CVec::Zero(k));
    if (!dg0.allFinite() || std::abs(dg0.determinant()) < 1e-300)
        raise(ErrorKind::SingularLinearPart, "Dg(0) is not invertible");
    CMat dg0_inv = dg0.inverse();

    double sup = 0.0;
    std::mt19937_64 rng = rng_stream(0x1417, static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<CVec> samples;
    samples.push_back(CVec::Zero(k));
    // Boundary-heavy sampling: the defect grows toward the boundary.
    const int boundary = 24, interior = 16;
    for (int s = 0; s < boundary; ++s) {
        CVec z(k);
        for (int i = 0; i < k; ++i) z[i] = Complex(unif(rng), unif(rng));
        double m = max_norm(z);
        if (m > 0) z *= radius / m;
        samples.push_back(z);
    }
    for (int s = 0; s < interior; ++s) {
        CVec z(k);
        for (int i = 0; i < k; ++i) z[i] = Complex(0.9 * radius * unif(rng), 0.9 * radius * unif(rng));
        if (max_norm(z) > radius) z *= radius / max_norm(z);
        samples.push_back(z);
    }
    for (const CVec& z : samples) {
        CMat defect = CMat::Identity(k, k) - dg0_inv * dg(z);
        sup = std::max(sup, op_norm_inf(defect));
    }
    return 0.5 - sup;
}

// ---------------------------------------------------------------------------
// Serialization

static void write_cvec(std::ostream& out, const CVec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %.17g %.17g", v[i].real(), v[i].imag());
        out << buf;
    }
}

static CVec read_cvec(std::istream& in, int n) {
    CVec v(n);
    for (int i = 0; i < n; ++i) {
        double re, im;
        if (!(in >> re >> im)) raise(ErrorKind::ParseError, "truncated patch payload");
        v[i] = Complex(re, im);
    }
    return v;
}

void write_patch(const GraphPatch& p, std::ostream& out) {
    out << "# pentropy graph patch v1\n";
    out << "mode " << (p.mode == Mode::Complex ? "complex" : "real") << "\n";
    out << "k " << p.k << "\n";
    out << "l " << p.l << "\n";
    out << "grid " << p.grid_resolution << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", p.lip_bound);
    out << "lip " << buf << "\n";
    out << "radius";
    for (double r : p.radii) {
        std::snprintf(buf, sizeof buf, " %.17g", r);
        out << buf;
    }
    out << "\n";
    out << "anchor";
    write_cvec(out, p.anchor);
    out << "\n";
    out << "base";
    for (int c = 0; c < p.l; ++c) write_cvec(out, p.base.col(c));
    out << "\n";
    out << "complement";
    for (int c = 0; c < p.k - p.l; ++c) write_cvec(out, p.complement.col(c));
    out << "\n";
    std::snprintf(buf, sizeof buf, "%.17g %d %.17g", p.admissibility.delta, p.admissibility.n,
                  p.admissibility.min_singular);
    out << "admissibility " << buf << "\n";
    std::vector<CVec> nodes = p.base_nodes();
    out << "nodes " << nodes.size() << "\n";
    for (size_t i = 0; i < nodes.size(); ++i) {
        out << i;
        write_cvec(out, nodes[i]);
        write_cvec(out, p.value(nodes[i]));
        out << "\n";
    }
}

GraphPatch read_patch(std::istream& in) {
    GraphPatch p;
    std::string line, key;
    if (!std::getline(in, line) || line.rfind("# pentropy graph patch", 0) != 0)
        raise(ErrorKind::ParseError, "missing patch header");
    std::string mode_word;
    in >> key >> mode_word;
    if (key != "mode") raise(ErrorKind::ParseError, "expected 'mode'");
    p.mode = mode_word == "real" ? Mode::Real : Mode::Complex;
    in >> key >> p.k;
    in >> key >> p.l;
    in >> key >> p.grid_resolution;
    in >> key >> p.lip_bound;
    in >> key; // radius
    p.radii.resize(static_cast<size_t>(p.l));
    for (double& r : p.radii) in >> r;
    in >> key; // anchor
    p.anchor = read_cvec(in, p.k);
    in >> key; // base
    p.base = CMat(p.k, p.l);
    for (int c = 0; c < p.l; ++c) p.base.col(c) = read_cvec(in, p.k);
    in >> key; // complement
    p.complement = CMat(p.k, p.k - p.l);
    for (int c = 0; c < p.k - p.l; ++c) p.complement.col(c) = read_cvec(in, p.k);
    in >> key >> p.admissibility.delta >> p.admissibility.n >> p.admissibility.min_singular;
    p.admissibility.filled = true;
    size_t count = 0;
    in >> key >> count;
    std::vector<CVec> nodes;
    std::vector<CVec> vals;
    for (size_t i = 0; i < count; ++i) {
        size_t idx;
        in >> idx;
        nodes.push_back(read_cvec(in, p.l));
        vals.push_back(read_cvec(in, p.k - p.l));
    }
    if (!in) raise(ErrorKind::ParseError, "truncated patch node table");
    // Nearest-node evaluator: exact at the stored lattice, first-order
    // elsewhere. File patches are audit artifacts, not transform inputs.
    const int cdim = p.k - p.l;
    p.values = [nodes, vals, cdim](const CVec& x) {
        if (nodes.empty()) return CVec(CVec::Zero(cdim));
        size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < nodes.size(); ++i) {
            double d = max_norm(CVec(nodes[i] - x));
            if (d < bd) {
                bd = d;
                best = i;
            }
        }
        return vals[best];
    };
    return p;
}

} // namespace pentropy

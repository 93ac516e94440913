#include "lcgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lcgan/errors.hpp"

namespace lcgan {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
// Zone bounds in head-frame units (inner-skull radius R ~ 0.92).
constexpr double kInteriorMargin = 0.08;  // IPH/IVH must stay this far off the skull
constexpr double kBoundaryBand = 0.35;    // EDH/SDH must stay inside this band

double ang_diff(double a, double b) {
    double d = std::fmod(a - b + 3.0 * kPi, 2.0 * kPi) - kPi;
    return d;
}

// Worst-case radial reach of interior lesions (jitter and slice scaling
// included); shared by planning and validation.
double iph_reach(const LesionPlan& p) {
    return p.radial + 0.02 + 1.24 * p.size * std::max(1.0, p.aspect);
}
double ivh_reach(const LesionPlan& p) { return p.radial + 0.02 + 1.80 * p.size; }

// Exact depth of the EDH lens below the inner-skull circle at worst-case
// slice scaling.
double edh_depth(const LesionPlan& p, double R) {
    const double half = 0.5 * p.span;
    const double d2 = R * (1.0 + p.bulge * 1.05);
    const double r2 = std::sqrt(R * R + d2 * d2 - 2.0 * R * d2 * std::cos(half));
    return R - d2 + r2;
}

struct HeadFrame {
    double cx, cy, ax, ay, cphi, sphi;
    double R;  // inner skull radius (relative)

    void to_frame(double x, double y, double& u, double& v) const {
        const double dx = x - cx, dy = y - cy;
        u = (dx * cphi + dy * sphi) / ax;
        v = (-dx * sphi + dy * cphi) / ay;
    }
};

// Per-slice lesion instance: plan values jittered along the slice axis.
struct LesionInstance {
    const LesionPlan* plan;
    double size_mul;
    double du, dv;  // small positional jitter (frame units)
};

bool in_iph(const LesionPlan& p, const LesionInstance& li, double u, double v) {
    const double cu = p.radial * std::cos(p.angle) + li.du;
    const double cv = p.radial * std::sin(p.angle) + li.dv;
    const double co = std::cos(p.orient), so = std::sin(p.orient);
    const double lu = (u - cu) * co + (v - cv) * so;
    const double lv = -(u - cu) * so + (v - cv) * co;
    const double r1 = p.size * li.size_mul;
    const double r2 = p.size * p.aspect * li.size_mul;
    const double rr = std::sqrt((lu / r1) * (lu / r1) + (lv / r2) * (lv / r2));
    if (rr > 1.4) return false;
    const double phi_local = std::atan2(lv, lu);
    const double wobble = 1.0 + 0.18 * std::cos(3.0 * phi_local + p.wobble_phase);
    return rr <= wobble;
}

bool in_ivh(const LesionPlan& p, const LesionInstance& li, double u, double v) {
    // 2-3 lobes around the plan center
    Rng lobe_rng(p.seed);
    const int lobes = 2 + static_cast<int>(lobe_rng.uniform_int(2));
    const double cu = p.radial * std::cos(p.angle) + li.du;
    const double cv = p.radial * std::sin(p.angle) + li.dv;
    for (int l = 0; l < lobes; ++l) {
        const double oa = lobe_rng.uniform(0.0, 2.0 * kPi);
        const double od = lobe_rng.uniform(0.2, 0.8) * p.size;
        const double lr = lobe_rng.uniform(0.55, 0.95) * p.size * li.size_mul;
        const double lu = u - (cu + od * std::cos(oa));
        const double lv = v - (cv + od * std::sin(oa));
        if (lu * lu + lv * lv <= lr * lr) return true;
    }
    return false;
}

bool in_sah(const LesionPlan& p, const LesionInstance& li, double rho, double theta, double R) {
    const double r_out = R - p.radial;  // radial: gap below the cortex
    const double r_in = r_out - p.size * li.size_mul;
    if (rho > r_out || rho < r_in) return false;
    return std::abs(ang_diff(theta, p.angle)) <= 0.5 * p.span;
}

bool in_edh(const LesionPlan& p, const LesionInstance& li, double u, double v, double rho, double R) {
    if (rho > R) return false;
    const double half = 0.5 * p.span;
    // chord endpoints on the inner-skull circle
    const double p1u = R * std::cos(p.angle - half), p1v = R * std::sin(p.angle - half);
    // second circle centered outside along the placement direction
    const double d2 = R * (1.0 + p.bulge * li.size_mul);
    const double c2u = d2 * std::cos(p.angle), c2v = d2 * std::sin(p.angle);
    const double r2 = std::hypot(p1u - c2u, p1v - c2v);
    return std::hypot(u - c2u, v - c2v) <= r2;
}

bool in_sdh(const LesionPlan& p, const LesionInstance& li, double rho, double theta, double R) {
    const double d = ang_diff(theta, p.angle);
    if (std::abs(d) > 0.5 * p.span) return false;
    const double taper = std::cos(kPi * d / p.span);
    const double w = p.size * li.size_mul * taper * taper;
    return rho <= R && rho >= R - w;
}

bool lesion_contains(const LesionPlan& p, const LesionInstance& li, double u, double v, double rho,
                     double theta, double R) {
    switch (p.cls) {
        case 1: return in_iph(p, li, u, v);
        case 2: return in_ivh(p, li, u, v);
        case 3: return in_sah(p, li, rho, theta, R);
        case 4: return in_edh(p, li, u, v, rho, R);
        case 5: return in_sdh(p, li, rho, theta, R);
    }
    return false;
}

// Closed-form zone validation of a plan (before any rasterization).
void validate_plan(const PatientSpec& spec) {
    const double R = 1.0 - spec.skull_t;
    for (const auto& p : spec.lesions) {
        if (p.cls < 1 || p.cls > 5)
            throw ValueError("lesion class " + std::to_string(p.cls) + " out of range 1..5");
        const char* name = lesion_class_name(p.cls);
        switch (p.cls) {
            case 1: {
                if (iph_reach(p) > R - kInteriorMargin)
                    throw ValueError(std::string("lesion plan violates zone: ") + name +
                                     " reaches the skull (extent " + std::to_string(iph_reach(p)) + ")");
                break;
            }
            case 2: {
                if (ivh_reach(p) > R - kInteriorMargin)
                    throw ValueError(std::string("lesion plan violates zone: ") + name +
                                     " reaches the skull (extent " + std::to_string(ivh_reach(p)) + ")");
                break;
            }
            case 3: {
                if (p.radial < 0.0 || p.radial + p.size * 1.1 > 0.45 * R)
                    throw ValueError(std::string("lesion plan violates zone: ") + name +
                                     " ribbon not near the cortex");
                break;
            }
            case 4: {
                const double depth = edh_depth(p, R);
                if (depth > kBoundaryBand - 0.01)
                    throw ValueError(std::string("lesion plan violates zone: ") + name +
                                     " lens too deep (" + std::to_string(depth) + ")");
                break;
            }
            case 5: {
                if (p.size * 1.05 > kBoundaryBand)
                    throw ValueError(std::string("lesion plan violates zone: ") + name +
                                     " crescent too thick (" + std::to_string(p.size) + ")");
                break;
            }
        }
    }
}

struct Wave {
    double fx, fy, phase, amp;
};

}  // namespace

PatientSpec plan_patient(const std::string& id, int image_size, Rng& rng) {
    PatientSpec s;
    s.id = id;
    s.image_size = image_size;
    s.seed = rng.next_u64();
    Rng r(s.seed);
    const double S = image_size;
    s.slice_count = 8 + static_cast<int>(r.uniform_int(9));  // uniform 8..16
    s.cx = S * 0.5 + r.uniform(-S / 32.0, S / 32.0);
    s.cy = S * 0.5 + r.uniform(-S / 32.0, S / 32.0);
    s.ax = S * r.uniform(0.33, 0.44);
    s.ay = S * r.uniform(0.33, 0.44);
    s.phi = r.uniform(-0.45, 0.45);
    s.skull_t = r.uniform(0.06, 0.10);
    const double R = 1.0 - s.skull_t;

    // 1-3 distinct classes, one lesion each
    std::vector<int> classes = {1, 2, 3, 4, 5};
    r.shuffle(classes);
    const int n_lesions = 1 + static_cast<int>(r.uniform_int(3));
    classes.resize(static_cast<size_t>(n_lesions));
    std::sort(classes.begin(), classes.end());

    // keep boundary lesions in disjoint sectors and interior centers apart
    std::vector<double> used_angles;
    std::vector<std::pair<double, double>> used_centers;
    for (int cls : classes) {
        LesionPlan p;
        p.cls = cls;
        p.seed = r.next_u64();
        p.intensity = r.uniform(0.76, 0.90);
        p.wobble_phase = r.uniform(0.0, 2.0 * kPi);
        for (int attempt = 0; attempt < 64; ++attempt) {
            p.angle = r.uniform(-kPi, kPi);
            bool ok = true;
            if (cls >= 3) {  // boundary-adjacent classes
                for (double a : used_angles)
                    if (std::abs(ang_diff(p.angle, a)) < 1.5) ok = false;
            }
            if (!ok) continue;
            switch (cls) {
                case 1:
                    p.radial = r.uniform(0.15, 0.48);
                    p.size = r.uniform(0.10, 0.20);
                    p.aspect = r.uniform(0.65, 1.0);
                    p.orient = r.uniform(0.0, kPi);
                    break;
                case 2:
                    p.radial = r.uniform(0.0, 0.18);
                    p.size = r.uniform(0.10, 0.18);
                    break;
                case 3:
                    p.radial = r.uniform(0.01, 0.05);  // gap below cortex
                    p.size = r.uniform(0.040, 0.075);  // thickness
                    p.span = r.uniform(0.7, 1.5);
                    break;
                case 4:
                    p.span = r.uniform(0.8, 1.2);
                    p.bulge = r.uniform(0.35, 0.8);
                    while (edh_depth(p, R) > kBoundaryBand - 0.02) p.span *= 0.92;
                    break;
                case 5:
                    p.size = r.uniform(0.10, 0.22);
                    p.span = r.uniform(1.3, 2.3);
                    break;
            }
            if (cls <= 2) {
                const double cu = p.radial * std::cos(p.angle), cv = p.radial * std::sin(p.angle);
                for (auto [ou, ov] : used_centers)
                    if (std::hypot(cu - ou, cv - ov) < 0.32) ok = false;
                if (!ok) continue;
                // shrink until legal
                while ((cls == 1 ? iph_reach(p) : ivh_reach(p)) > R - kInteriorMargin) {
                    p.size *= 0.9;
                    if (p.size < 0.05) p.radial *= 0.8;
                }
                used_centers.emplace_back(p.radial * std::cos(p.angle), p.radial * std::sin(p.angle));
            } else {
                used_angles.push_back(p.angle);
            }
            break;
        }
        s.lesions.push_back(p);
    }
    return s;
}

std::vector<Sample> generate_patient(const PatientSpec& spec) {
    if (spec.slice_count < 1) throw ValueError("slice_count must be >= 1");
    validate_plan(spec);

    Rng patient_rng = Rng(spec.seed).child(Rng::hash_str("render"));
    const double R = 1.0 - spec.skull_t;
    HeadFrame frame{spec.cx, spec.cy, spec.ax, spec.ay, std::cos(spec.phi), std::sin(spec.phi), R};

    // per-patient low-frequency texture
    Wave waves[3];
    for (auto& w : waves) {
        w.fx = patient_rng.uniform(0.5, 2.5);
        w.fy = patient_rng.uniform(0.5, 2.5);
        w.phase = patient_rng.uniform(0.0, 2.0 * kPi);
        w.amp = patient_rng.uniform(0.015, 0.035);
    }
    const double brain_base = patient_rng.uniform(0.40, 0.46);
    const double skull_level = patient_rng.uniform(0.90, 0.96);
    const double ventricle_level = brain_base - patient_rng.uniform(0.10, 0.14);

    std::vector<Sample> out;
    const int S = spec.image_size;
    for (int slice = 0; slice < spec.slice_count; ++slice) {
        Rng srng = Rng(spec.seed).child(Rng::hash_str("slice"), static_cast<uint64_t>(slice));
        std::vector<LesionInstance> instances;
        instances.reserve(spec.lesions.size());
        for (const auto& p : spec.lesions) {
            LesionInstance li;
            li.plan = &p;
            // lesions span all slices with a smooth size profile
            const double t = (slice + 0.5) / spec.slice_count;
            li.size_mul = (0.62 + 0.38 * std::sin(kPi * t)) * srng.uniform(0.95, 1.05);
            li.du = srng.uniform(-0.012, 0.012);
            li.dv = srng.uniform(-0.012, 0.012);
            instances.push_back(li);
        }
        const double phase_jit = srng.uniform(-0.35, 0.35);

        Sample sample;
        sample.patient_id = spec.id;
        sample.slice_id = slice;
        sample.mask = make_image(S, S, 0);
        std::vector<double> img(static_cast<size_t>(S) * S, 0.0);

        for (int y = 0; y < S; ++y) {
            for (int x = 0; x < S; ++x) {
                double u, v;
                frame.to_frame(x, y, u, v);
                const double rho = std::hypot(u, v);
                const double theta = std::atan2(v, u);
                const size_t pix = static_cast<size_t>(y) * S + x;
                const double noise = srng.uniform(-1.0, 1.0);

                if (rho > 1.0) {
                    img[pix] = 0.04 + 0.02 * noise;
                    continue;
                }
                if (rho > R) {
                    img[pix] = skull_level + 0.02 * noise;
                    continue;
                }
                int cls = 0;
                double level = 0.0;
                for (const auto& li : instances) {
                    if (lesion_contains(*li.plan, li, u, v, rho, theta, R)) {
                        cls = li.plan->cls;
                        level = li.plan->intensity;
                        break;
                    }
                }
                if (cls > 0) {
                    sample.mask.pixels[pix] = static_cast<uint8_t>(cls);
                    img[pix] = level + 0.02 * noise;
                    continue;
                }
                // ventricles: two dark lobes near the center
                const bool vent = ((u - 0.13) * (u - 0.13) / (0.09 * 0.09) + v * v / (0.18 * 0.18) <= 1.0) ||
                                  ((u + 0.13) * (u + 0.13) / (0.09 * 0.09) + v * v / (0.18 * 0.18) <= 1.0);
                double tex = 0.0;
                for (const auto& w : waves)
                    tex += w.amp * std::cos(2.0 * kPi * (w.fx * x + w.fy * y) / S + w.phase + phase_jit);
                img[pix] = (vent ? ventricle_level : brain_base) + tex + 0.02 * noise;
            }
        }
        sample.image = quantize_unit(img, S, S);

        // every slice carries at least one lesion pixel
        bool any = false;
        for (uint8_t m : sample.mask.pixels)
            if (m > 0) {
                any = true;
                break;
            }
        if (!any) throw ValueError("generated slice has no lesion pixels (patient " + spec.id + ")");
        out.push_back(std::move(sample));
    }
    return out;
}

namespace {

std::string patient_name(const char* prefix, int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%s%04d", prefix, index);
    return buf;
}

Dataset generate_split(const char* prefix, int n_patients, int image_size, Rng& rng,
                       std::map<std::string, uint64_t>& seeds) {
    Dataset ds;
    ds.image_size = image_size;
    for (int i = 0; i < n_patients; ++i) {
        PatientSpec spec = plan_patient(patient_name(prefix, i), image_size, rng);
        seeds[spec.id] = spec.seed;
        auto samples = generate_patient(spec);
        for (auto& s : samples) ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

PhantomDataset generate_dataset(int n_train_patients, int n_test_patients, int image_size, uint64_t seed) {
    if (n_train_patients < 1 || n_test_patients < 1) throw ValueError("patient counts must be >= 1");
    PhantomDataset out;
    Rng train_rng = Rng(seed).child(Rng::hash_str("train"));
    Rng test_rng = Rng(seed).child(Rng::hash_str("test"));
    out.train = generate_split("tr", n_train_patients, image_size, train_rng, out.patient_seeds);
    out.test = generate_split("te", n_test_patients, image_size, test_rng, out.patient_seeds);
    return out;
}

Dataset subset_by_patients(const Dataset& ds, double percent, uint64_t seed) {
    if (percent <= 0.0 || percent > 100.0)
        throw ValueError("percent must be in (0,100], got " + std::to_string(percent));
    auto ids = ds.patient_ids();
    Rng rng(Rng::mix(seed ^ Rng::hash_str("subset")));
    rng.shuffle(ids);
    const size_t keep = static_cast<size_t>(
        std::ceil(percent / 100.0 * static_cast<double>(ids.size())));
    ids.resize(std::max<size_t>(1, keep));
    Dataset out;
    out.image_size = ds.image_size;
    // keep all slices of the selected patients, in original dataset order
    std::set<std::string> chosen(ids.begin(), ids.end());
    for (const auto& s : ds.samples)
        if (chosen.count(s.patient_id)) out.samples.push_back(s);
    return out;
}

}  // namespace lcgan

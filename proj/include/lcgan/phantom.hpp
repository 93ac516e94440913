#ifndef LCGAN_PHANTOM_HPP
#define LCGAN_PHANTOM_HPP

#include <map>
#include <string>
#include <vector>

#include "lcgan/dataset.hpp"
#include "lcgan/rng.hpp"

namespace lcgan {

// One planned lesion, parameterized in the head frame (inner-skull radius
// normalized to 1). Class-specific fields:
//   IPH  — compact wobbled ellipse in the parenchyma
//   IVH  — 2-3 overlapping lobes near the ventricle zone
//   SAH  — thin curvilinear ribbon just inside the cortex
//   EDH  — biconvex lens abutting the skull (two-circle intersection)
//   SDH  — crescent hugging the skull's inner edge (tapered band)
struct LesionPlan {
    int cls = 1;             // 1..5
    uint64_t seed = 0;       // sub-shape details (IVH lobes)
    double angle = 0.0;      // placement direction, radians
    double radial = 0.0;     // center radius (IPH/IVH) or cortex gap (SAH)
    double size = 0.1;       // primary extent
    double aspect = 1.0;     // secondary/primary radius ratio (IPH)
    double orient = 0.0;     // in-plane rotation (IPH)
    double wobble_phase = 0.0;
    double span = 1.0;       // angular extent (SAH/SDH) or 2x chord half-angle (EDH)
    double bulge = 0.3;      // inner-arc bulge (EDH)
    double intensity = 0.82;
};

struct PatientSpec {
    std::string id;
    uint64_t seed = 0;
    int image_size = 64;
    int slice_count = 12;  // uniform 8..16 when planned
    double cx = 0, cy = 0;  // head center, pixels
    double ax = 0, ay = 0;  // ellipse semi-axes, pixels
    double phi = 0;         // head orientation
    double skull_t = 0.08;  // skull thickness relative to the outer radius
    std::vector<LesionPlan> lesions;
};

// Random but anatomically-legal patient plan.
PatientSpec plan_patient(const std::string& id, int image_size, Rng& rng);

// Renders all slices of one patient. Lesion mask pixels coincide exactly
// with the hyperdense rendered region. Throws ValueError when a lesion plan
// violates its class zone (interior classes near the skull, boundary
// classes away from it).
std::vector<Sample> generate_patient(const PatientSpec& spec);

struct PhantomDataset {
    Dataset train;
    Dataset test;
    std::map<std::string, uint64_t> patient_seeds;
};

// Disjoint patient id spaces for train/test, deterministic under seed.
PhantomDataset generate_dataset(int n_train_patients, int n_test_patients, int image_size, uint64_t seed);

// Selects ceil(percent/100 * n_patients) patients by taking a prefix of a
// seeded patient permutation, with all their slices. Prefix selection makes
// the subsets nested across increasing percents for a fixed seed.
Dataset subset_by_patients(const Dataset& ds, double percent, uint64_t seed);

}  // namespace lcgan

#endif

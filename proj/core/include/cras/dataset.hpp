#pragma once

#include <vector>

#include "cras/crd_train.hpp"
#include "cras/feature_prep.hpp"
#include "cras/scoring_eval.hpp"
#include "cras/tensor_store.hpp"

namespace cras {

// Features t_i of one sample: level-tagged entries are merged with `prep`,
// a level-less entry is taken as already-merged features.
FeatureMap load_sample_features(const DatasetManifest& manifest, const SampleRecord& sample,
                                const PrepConfig& prep);

std::vector<TrainSample> load_train_samples(const DatasetManifest& manifest,
                                            const PrepConfig& prep);

std::vector<EvalSample> load_eval_samples(const DatasetManifest& manifest, const PrepConfig& prep);

}  // namespace cras

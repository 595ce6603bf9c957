#include "cras/dataset.hpp"

namespace cras {

FeatureMap load_sample_features(const DatasetManifest& manifest, const SampleRecord& sample,
                                const PrepConfig& prep) {
  if (sample.merged_path) {
    require(sample.levels.empty(), ErrorCode::kManifest,
            "sample '" + sample.sample_id + "' mixes merged and level-tagged entries");
    return read_feature_map(manifest.resolve(*sample.merged_path));
  }
  require(!sample.levels.empty(), ErrorCode::kManifest,
          "sample '" + sample.sample_id + "' has no feature entries");
  HierarchyStack stack;
  for (const auto& [level, path] : sample.levels) {
    stack.push_back({level, read_feature_map(manifest.resolve(path))});
  }
  return merge_hierarchies(stack, prep);
}

std::vector<TrainSample> load_train_samples(const DatasetManifest& manifest,
                                            const PrepConfig& prep) {
  std::vector<TrainSample> out;
  for (const auto& record : group_samples(manifest, Split::kTrain)) {
    out.push_back({record.sample_id, record.category,
                   load_sample_features(manifest, record, prep)});
  }
  return out;
}

std::vector<EvalSample> load_eval_samples(const DatasetManifest& manifest, const PrepConfig& prep) {
  std::vector<EvalSample> out;
  for (const auto& record : group_samples(manifest, Split::kTest)) {
    EvalSample sample;
    sample.sample_id = record.sample_id;
    sample.category = record.category;
    sample.label = record.label;
    sample.features = load_sample_features(manifest, record, prep);
    if (record.mask_path) sample.mask = read_mask(manifest.resolve(*record.mask_path));
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace cras

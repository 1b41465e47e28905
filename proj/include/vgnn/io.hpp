// File formats: dataset JSON, model checkpoint JSON, loss-history and
// prediction CSVs, metric report JSON.

#pragma once

#include <string>
#include <vector>

#include "vgnn/metrics.hpp"
#include "vgnn/model.hpp"
#include "vgnn/training.hpp"

namespace vgnn {

// Schema violations carry the offending field path in the message.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable / unwritable paths, as opposed to malformed content.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// {mesh: {coords, elements, gamma_u, gamma_t}, simulations: [{u, y, meta}]}
void write_dataset_json(const Dataset& ds, const std::string& path);
Dataset read_dataset_json(const std::string& path);

void write_checkpoint_json(const ModelState& state, const std::string& path);
ModelState read_checkpoint_json(const std::string& path);

// columns: epoch,total,nll,kl,lr
void write_loss_csv(const std::vector<EpochRecord>& history, const std::string& path);

// per node: id, coords, truth..., mean..., s_a, s_e, lower..., upper...
void write_prediction_csv(const Mesh& mesh, const Matrix& truth,
                          const PredictiveField& field, const std::string& path);

void write_metric_json(const MetricReport& report, const std::string& path);

}  // namespace vgnn

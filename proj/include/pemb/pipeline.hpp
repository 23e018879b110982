#ifndef PEMB_PIPELINE_HPP_
#define PEMB_PIPELINE_HPP_

#include "pemb/config.hpp"

namespace pemb::cli {

// Rollout-collection worker count, from PEMB_THREADS (default 1). Collection
// artifacts do not depend on it.
int collection_threads();

// Pipeline stages. Each reads its inputs from and writes its artifacts under
// config.out_dir; stages compose into collect -> split -> train-embed ->
// eval-embed [-> train-rl] -> report.
void cmd_gen_population(const RunConfig& config);
void cmd_collect(const RunConfig& config);
void cmd_split(const RunConfig& config);
void cmd_train_embed(const RunConfig& config);
void cmd_eval_embed(const RunConfig& config);
void cmd_train_rl(const RunConfig& config);

// Collates whatever artifacts exist into the report bundle; missing inputs
// become explicit gaps rather than failures.
void cmd_report(const RunConfig& config);

void cmd_run_all(const RunConfig& config);

}  // namespace pemb::cli

#endif  // PEMB_PIPELINE_HPP_

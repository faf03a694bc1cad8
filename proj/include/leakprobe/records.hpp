#pragma once

#include "leakprobe/gcg.hpp"
#include "leakprobe/verdict.hpp"

namespace leakprobe {

// Line records for run logs and checkpoints. Field names follow the types.

ojson to_json(const TokenSequence& seq);
TokenSequence sequence_from_json(const ojson& j);

ojson to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const ojson& j);

/// Includes every field of ProbeResult; `with_epochs` also embeds the epoch
/// records (run logs write them as separate lines instead).
ojson to_json(const ProbeResult& r, bool with_epochs = false);
ProbeResult probe_result_from_json(const ojson& j);

}  // namespace leakprobe

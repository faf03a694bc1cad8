#include "leakprobe/records.hpp"

#include "leakprobe/errors.hpp"

namespace leakprobe {

ojson to_json(const TokenSequence& seq) {
  ojson j;
  j["ids"] = seq.ids();
  j["adv_slice"] = seq.adv_slice().positions();
  j["target_ids"] = seq.target_ids();
  return j;
}

TokenSequence sequence_from_json(const ojson& j) {
  const auto positions = j.at("adv_slice").get<std::vector<std::size_t>>();
  AdvSlice slice{positions.empty() ? 0 : positions.front(), positions.size()};
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] != slice.begin + i) throw InvalidArgument("adv_slice is not contiguous");
  }
  return TokenSequence(j.at("ids").get<std::vector<TokenId>>(), slice,
                       j.at("target_ids").get<std::vector<TokenId>>());
}

ojson to_json(const EpochRecord& r) {
  ojson j;
  j["epoch"] = r.epoch;
  j["batch_losses"] = r.batch_losses;
  j["chosen_index"] = r.chosen_index;
  j["chosen_position"] = r.chosen_position;
  j["chosen_token"] = r.chosen_token;
  j["accepted"] = r.accepted;
  j["judge_invoked"] = r.judge_invoked;
  j["loss"] = r.loss;
  return j;
}

EpochRecord epoch_record_from_json(const ojson& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.batch_losses = j.at("batch_losses").get<std::vector<double>>();
  r.chosen_index = j.at("chosen_index").get<std::int64_t>();
  r.chosen_position = j.at("chosen_position").get<std::int64_t>();
  r.chosen_token = j.at("chosen_token").get<TokenId>();
  r.accepted = j.at("accepted").get<bool>();
  r.judge_invoked = j.at("judge_invoked").get<bool>();
  r.loss = j.at("loss").get<double>();
  return r;
}

ojson to_json(const ProbeResult& r, bool with_epochs) {
  ojson j;
  j["final_ids"] = to_json(r.final_ids);
  j["best_loss_trace"] = r.best_loss_trace;
  ojson completions = ojson::array();
  for (const auto& [e, text] : r.completions) completions.push_back({{"epoch", e}, {"text", text}});
  j["completions"] = std::move(completions);
  ojson verdicts = ojson::array();
  for (const auto& [e, v] : r.verdicts) verdicts.push_back({{"epoch", e}, {"verdict", to_json(v)}});
  j["verdicts"] = std::move(verdicts);
  j["leaked"] = r.leaked;
  j["stop_epoch"] = r.stop_epoch ? ojson(*r.stop_epoch) : ojson(nullptr);
  j["suffix_text"] = r.suffix_text;
  j["initial_loss"] = r.initial_loss;
  j["final_loss"] = r.final_loss;
  if (with_epochs) {
    ojson epochs = ojson::array();
    for (const auto& e : r.epochs) epochs.push_back(to_json(e));
    j["epochs"] = std::move(epochs);
  }
  return j;
}

ProbeResult probe_result_from_json(const ojson& j) {
  ProbeResult r;
  r.final_ids = sequence_from_json(j.at("final_ids"));
  r.best_loss_trace = j.at("best_loss_trace").get<std::vector<double>>();
  for (const auto& c : j.at("completions"))
    r.completions.emplace_back(c.at("epoch").get<std::size_t>(), c.at("text").get<std::string>());
  for (const auto& v : j.at("verdicts"))
    r.verdicts.emplace_back(v.at("epoch").get<std::size_t>(), verdict_from_json(v.at("verdict")));
  r.leaked = j.at("leaked").get<bool>();
  if (!j.at("stop_epoch").is_null()) r.stop_epoch = j.at("stop_epoch").get<std::size_t>();
  r.suffix_text = j.value("suffix_text", "");
  r.initial_loss = j.value("initial_loss", 0.0);
  r.final_loss = j.value("final_loss", 0.0);
  if (j.contains("epochs"))
    for (const auto& e : j.at("epochs")) r.epochs.push_back(epoch_record_from_json(e));
  return r;
}

}  // namespace leakprobe

#pragma once

#include <string>
#include <vector>

#include "tftl/error.hpp"

namespace tftl {

// The four layer-freezing strategies. Trainable sets are fixed per strategy:
//   FullFinetune       every group
//   PartialFinetune    everything except the three input embedding groups
//   ProbeOnly          exactly the output head
//   ProgressiveUnfreeze decoder-side sequence modeling plus the head, with
//                      encoder, variable selection and embeddings frozen
enum class Strategy { FullFinetune, PartialFinetune, ProbeOnly, ProgressiveUnfreeze };

const char* strategy_name(Strategy strategy);
Strategy strategy_from_name(const std::string& name);

struct FreezePlan {
    Strategy strategy = Strategy::FullFinetune;
    std::vector<std::string> trainable_groups;

    static FreezePlan for_strategy(Strategy strategy);
    bool is_trainable(const std::string& group) const;
};

}  // namespace tftl

#include "tftl/freeze.hpp"

#include <algorithm>

namespace tftl {

namespace {

const std::vector<std::string> kAllGroups = {
    "static_embed", "known_embed", "unknown_embed", "varsel_grn", "encoder_lstm",
    "decoder_lstm", "attention",   "post_attn_grn", "output_head"};

}  // namespace

const char* strategy_name(Strategy strategy) {
    switch (strategy) {
        case Strategy::FullFinetune: return "FullFinetune";
        case Strategy::PartialFinetune: return "PartialFinetune";
        case Strategy::ProbeOnly: return "ProbeOnly";
        case Strategy::ProgressiveUnfreeze: return "ProgressiveUnfreeze";
    }
    return "FullFinetune";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "FullFinetune" || name == "FF") {
        return Strategy::FullFinetune;
    }
    if (name == "PartialFinetune" || name == "PF") {
        return Strategy::PartialFinetune;
    }
    if (name == "ProbeOnly" || name == "PO") {
        return Strategy::ProbeOnly;
    }
    if (name == "ProgressiveUnfreeze" || name == "PU") {
        return Strategy::ProgressiveUnfreeze;
    }
    raise(ErrorKind::Contract, "unknown strategy '" + name + "'");
}

FreezePlan FreezePlan::for_strategy(Strategy strategy) {
    FreezePlan plan;
    plan.strategy = strategy;
    switch (strategy) {
        case Strategy::FullFinetune:
            plan.trainable_groups = kAllGroups;
            break;
        case Strategy::PartialFinetune:
            for (const std::string& g : kAllGroups) {
                if (g != "static_embed" && g != "known_embed" && g != "unknown_embed") {
                    plan.trainable_groups.push_back(g);
                }
            }
            break;
        case Strategy::ProbeOnly:
            plan.trainable_groups = {"output_head"};
            break;
        case Strategy::ProgressiveUnfreeze:
            plan.trainable_groups = {"decoder_lstm", "attention", "post_attn_grn",
                                     "output_head"};
            break;
    }
    return plan;
}

bool FreezePlan::is_trainable(const std::string& group) const {
    return std::find(trainable_groups.begin(), trainable_groups.end(), group) !=
           trainable_groups.end();
}

}  // namespace tftl

#pragma once

// Glue between the oracle models and library types.

#include "mcvd/channel_model.hpp"
#include "oracles.hpp"

namespace support {

inline mcvd::StateTable to_table(const oracle::Model& md) {
  return mcvd::StateTable::from_moments(md.m, md.mean[0], md.var[0], md.mean[1], md.var[1]);
}

inline mcvd::Channel default_channel(double ts, int m, int ntx = 1000) {
  mcvd::ChannelConfig cfg;
  cfg.symbol_duration_s = ts;
  cfg.molecules_per_on = ntx;
  return mcvd::make_channel(cfg, m);
}

}  // namespace support

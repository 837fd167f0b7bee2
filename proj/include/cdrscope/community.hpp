#pragma once

#include <string>
#include <vector>

#include "cdrscope/graph.hpp"

namespace cdrscope {

struct Community {
    NodeId label;                 // the label id that defines this community
    std::vector<NodeId> members;  // sorted
};

struct CommunityCover {
    std::vector<Community> communities;            // sorted by label
    std::vector<std::vector<NodeId>> node_labels;  // per node, sorted surviving labels
    uint32_t T = 0;
    double r = 0.0;
    uint64_t seed = 0;
};

// Speaker-listener label propagation over the undirected dyad-weight
// projection (w_ij + w_ji). Each node's memory starts with its own id; for T
// rounds, in a reshuffled node order, every neighbor of the listener speaks
// one label drawn from its memory with probability proportional to frequency,
// votes are weighted by dyad weight, and the winning label (ties to the
// smallest id) is appended to the listener's memory. Labels whose memory
// frequency reaches r survive; each surviving label is one community.
CommunityCover slpa_detect(const WeightedDigraph& g, uint32_t T, double r, uint64_t seed);

struct DistrictOverlap {
    struct Row {
        NodeId community_label;
        size_t community_size;  // members with a known district
        std::vector<std::pair<uint32_t, double>> top;  // (district, share) descending
    };
    std::vector<Row> rows;
    double mean_top1 = 0.0;      // mean share of the dominant district
    double mean_topk_cum = 0.0;  // mean cumulative share of the top k
    size_t skipped_no_district = 0;  // communities with no district-bearing member
};

// Share of each community's members living in its most common districts.
// Only members with a district (internal users) count; communities made of
// external contacts alone are skipped and tallied.
DistrictOverlap district_overlap(const CommunityCover& cover,
                                 const std::vector<UserRecord>& users, NodeId n_internal,
                                 size_t top_k);

void write_cover_csv(const CommunityCover& cover, const Dataset& ds, const std::string& path);
std::string cover_summary_json(const CommunityCover& cover, const DistrictOverlap& overlap);

}  // namespace cdrscope

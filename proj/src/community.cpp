#include "cdrscope/community.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "cdrscope/csv.hpp"
#include "cdrscope/rng.hpp"
#include "json.hpp"

namespace cdrscope {

CommunityCover slpa_detect(const WeightedDigraph& g, uint32_t T, double r, uint64_t seed) {
    if (T < 1) throw std::invalid_argument("slpa needs T >= 1");
    if (!(r > 0.0 && r < 0.5)) throw std::invalid_argument("slpa needs 0 < r < 0.5");
    const size_t n = g.node_count();

    // undirected projection, neighbors ascending
    std::vector<std::vector<std::pair<NodeId, uint64_t>>> nb(n);
    for (NodeId u = 0; u < n; ++u)
        for_each_dyad(g, u, [&](NodeId v, uint32_t out_w, uint32_t in_w) {
            nb[u].emplace_back(v, uint64_t(out_w) + uint64_t(in_w));
        });

    // label memories; ordered maps keep draws and votes platform-stable
    std::vector<std::map<NodeId, uint32_t>> memory(n);
    std::vector<uint32_t> memory_total(n, 1);
    for (NodeId u = 0; u < n; ++u) memory[u][u] = 1;

    auto speak = [&](NodeId who, Rng& rng) {
        uint64_t pick = rng.bounded(memory_total[who]);
        for (const auto& [label, cnt] : memory[who]) {
            if (pick < cnt) return label;
            pick -= cnt;
        }
        return who;  // unreachable
    };

    Rng rng = Rng::derive(seed, 0x534c5041u);  // stream key for propagation
    std::vector<NodeId> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = NodeId(i);
    std::map<NodeId, uint64_t> votes;

    for (uint32_t round = 0; round < T; ++round) {
        rng.shuffle(order);
        for (NodeId listener : order) {
            if (nb[listener].empty()) continue;
            votes.clear();
            for (const auto& [speaker, w] : nb[listener])
                votes[speak(speaker, rng)] += w;
            NodeId best = votes.begin()->first;
            uint64_t best_w = votes.begin()->second;
            for (const auto& [label, w] : votes) {
                if (w > best_w) {  // ties keep the smallest label id
                    best = label;
                    best_w = w;
                }
            }
            ++memory[listener][best];
            ++memory_total[listener];
        }
    }

    CommunityCover cover;
    cover.T = T;
    cover.r = r;
    cover.seed = seed;
    cover.node_labels.resize(n);
    std::map<NodeId, std::vector<NodeId>> groups;
    for (NodeId u = 0; u < n; ++u) {
        for (const auto& [label, cnt] : memory[u]) {
            if (double(cnt) >= r * double(memory_total[u]) - 1e-12) {
                cover.node_labels[u].push_back(label);
                groups[label].push_back(u);
            }
        }
    }
    cover.communities.reserve(groups.size());
    for (auto& [label, members] : groups)
        cover.communities.push_back({label, std::move(members)});
    return cover;
}

DistrictOverlap district_overlap(const CommunityCover& cover,
                                 const std::vector<UserRecord>& users, NodeId n_internal,
                                 size_t top_k) {
    if (top_k == 0) throw std::invalid_argument("top_k must be positive");
    DistrictOverlap res;
    double sum_top1 = 0.0, sum_cum = 0.0;
    for (const Community& c : cover.communities) {
        std::map<uint32_t, uint64_t> counts;
        size_t with_district = 0;
        for (NodeId u : c.members) {
            if (u >= n_internal) continue;  // external contacts have no district
            ++counts[users[u].district];
            ++with_district;
        }
        if (with_district == 0) {
            ++res.skipped_no_district;
            continue;
        }
        std::vector<std::pair<uint32_t, uint64_t>> by_count(counts.begin(), counts.end());
        std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        DistrictOverlap::Row row;
        row.community_label = c.label;
        row.community_size = with_district;
        double cum = 0.0;
        for (size_t i = 0; i < by_count.size() && i < top_k; ++i) {
            double share = double(by_count[i].second) / double(with_district);
            row.top.emplace_back(by_count[i].first, share);
            cum += share;
        }
        sum_top1 += row.top[0].second;
        sum_cum += cum;
        res.rows.push_back(std::move(row));
    }
    if (!res.rows.empty()) {
        res.mean_top1 = sum_top1 / double(res.rows.size());
        res.mean_topk_cum = sum_cum / double(res.rows.size());
    }
    return res;
}

void write_cover_csv(const CommunityCover& cover, const Dataset& ds, const std::string& path) {
    CsvWriter w(path);
    w.raw_line("community_id,user_id");
    for (const Community& c : cover.communities)
        for (NodeId u : c.members)
            w.row({std::to_string(c.label), ds.user_names.name(u)});
}

std::string cover_summary_json(const CommunityCover& cover, const DistrictOverlap& overlap) {
    nlohmann::json j;
    j["n_communities"] = cover.communities.size();
    j["T"] = cover.T;
    j["r"] = cover.r;
    j["seed"] = cover.seed;
    std::map<size_t, size_t> size_hist;
    double mean_size = 0.0;
    for (const Community& c : cover.communities) {
        ++size_hist[c.members.size()];
        mean_size += double(c.members.size());
    }
    if (!cover.communities.empty()) mean_size /= double(cover.communities.size());
    j["mean_size"] = mean_size;
    nlohmann::json hist = nlohmann::json::array();
    for (auto& [sz, cnt] : size_hist) hist.push_back({{"size", sz}, {"count", cnt}});
    j["size_distribution"] = hist;
    j["district_overlap"] = {
        {"mean_top1", overlap.mean_top1},
        {"mean_topk_cum", overlap.mean_topk_cum},
        {"communities_scored", overlap.rows.size()},
        {"skipped_no_district", overlap.skipped_no_district},
    };
    return j.dump(2);
}

}  // namespace cdrscope

#pragma once

// Instrumented stale-metadata detector: on every landing of the NIC->host
// stream-info slab it walks the host copy of the data ring up to the
// published tail and verifies each record's bytes against a shadow of what
// was produced.  Metadata observed before its data is a stale observation.

#include <cstring>
#include <unordered_map>

#include "support/nic_rig.hpp"

namespace rig {

struct HazardDetector {
    NicRig& r;
    std::unordered_map<uint64_t, std::vector<std::byte>> shadow; // rec begin -> payload
    uint64_t checked_upto = 0;
    uint64_t stale = 0;
    uint64_t validated = 0;

    explicit HazardDetector(NicRig& rig) : r(rig) {
        r.dma.set_apply_observer([this](const pno::dma::DmaCompletion&, pno::dma::Domain dst,
                                        uint64_t off, uint32_t len) {
            if (dst != pno::dma::Domain::host) {
                return;
            }
            uint64_t lo = r.lay.info_n2h;
            uint64_t hi = r.lay.info_n2h_end();
            if (off + len <= lo || off >= hi) {
                return;
            }
            check();
        });
    }

    void note(pno::rings::DataRef ref, std::span<const std::byte> payload) {
        shadow[ref.begin] = std::vector<std::byte>(payload.begin(), payload.end());
    }

    void check() {
        using namespace pno;
        uint64_t tail = r.host.load_u64(r.lay.info_n2h + rings::kInfoHdrDataTail);
        const uint64_t mask = r.lay.data_cap - 1;
        while (checked_upto < tail) {
            uint64_t off = r.lay.data + (checked_upto & mask);
            uint32_t fd = r.host.load_u32(off);
            uint32_t len = r.host.load_u32(off + 4);
            if (rings::kGRecHeader + rings::round8(len) > r.lay.data_cap) {
                stale++; // torn record header
                checked_upto = tail;
                break;
            }
            uint64_t foot = rings::kGRecHeader + rings::round8(len);
            if (fd != rings::kGSkipFd) {
                auto it = shadow.find(checked_upto);
                if (it == shadow.end() || it->second.size() != len ||
                    std::memcmp(r.host.data() + off + rings::kGRecHeader, it->second.data(),
                                len) != 0) {
                    stale++;
                } else {
                    validated++;
                    shadow.erase(it);
                }
            }
            checked_upto += foot;
        }
    }
};

} // namespace rig

#pragma once

// Uniform-price call auction: order validation, cumulative supply/demand
// schedules, volume-maximising clearing and deterministic rationing.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bubblelab/decimal.hpp"

namespace bubblelab {

using Price = std::int64_t;
using Quantity = std::int64_t;

struct AgentId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(AgentId, AgentId) = default;
};

enum class Side { kBuy, kSell };

inline std::string_view to_string(Side s) { return s == Side::kBuy ? "BUY" : "SELL"; }

struct Order {
  AgentId agent;
  Side side = Side::kBuy;
  Quantity quantity = 1;
  Price limit_price = 0;

  [[nodiscard]] bool well_formed() const { return quantity >= 1 && limit_price >= 0; }
  friend bool operator==(const Order&, const Order&) = default;
};

/// Closed integer interval of admissible limit prices.
struct PriceBand {
  Price low = 0;
  Price high = 0;

  [[nodiscard]] bool empty() const { return low > high; }
  [[nodiscard]] bool contains(Price p) const { return p >= low && p <= high; }
  friend bool operator==(const PriceBand&, const PriceBand&) = default;
};

/// Band of width `halfwidth` around the reference price, floored at zero.
inline PriceBand band_around(Price reference, Price halfwidth) {
  return PriceBand{std::max<Price>(0, reference - halfwidth), reference + halfwidth};
}

struct OrderBook {
  int round = 0;
  std::vector<Order> bids;
  std::vector<Order> asks;
  Price previous_price = 0;

  /// Splits orders by side, preserving submission order within each side.
  static OrderBook from_orders(std::span<const Order> orders, Price previous_price, int round = 0) {
    OrderBook book;
    book.round = round;
    book.previous_price = previous_price;
    for (const auto& o : orders) (o.side == Side::kBuy ? book.bids : book.asks).push_back(o);
    return book;
  }
};

struct Fill {
  AgentId agent;
  Side side = Side::kBuy;
  Quantity quantity = 0;
  Price price = 0;
  /// Position of the filled order within its side of the book.
  std::size_t order_index = 0;
  friend bool operator==(const Fill&, const Fill&) = default;
};

struct ClearingOutcome {
  Price price = 0;
  Quantity volume = 0;
  std::vector<Fill> fills;
  bool crossed = false;
  friend bool operator==(const ClearingOutcome&, const ClearingOutcome&) = default;
};

/// Q^B(p): shares demanded by bids with limit >= p.
inline Quantity cumulative_buy(const OrderBook& book, Price p) {
  Quantity total = 0;
  for (const auto& o : book.bids) {
    if (o.limit_price >= p) total += o.quantity;
  }
  return total;
}

/// Q^A(p): shares offered by asks with limit <= p.
inline Quantity cumulative_sell(const OrderBook& book, Price p) {
  Quantity total = 0;
  for (const auto& o : book.asks) {
    if (o.limit_price <= p) total += o.quantity;
  }
  return total;
}

inline Quantity executable_volume(const OrderBook& book, Price p) {
  return std::min(cumulative_buy(book, p), cumulative_sell(book, p));
}

namespace detail {

inline Price distance(Price a, Price b) { return a > b ? a - b : b - a; }

// Fills `volume` shares on one side. Price levels are visited from most to
// least aggressive; a level that fits in the remaining volume fills in full,
// the first level that does not is rationed one share at a time across its
// agents in ascending id order (orders of one agent in submission order).
inline void allocate_side(const std::vector<Order>& orders, Side side, Price price, Quantity volume,
                          std::vector<Fill>& out) {
  std::vector<Quantity> filled(orders.size(), 0);
  std::map<Price, std::vector<std::size_t>> levels;
  for (std::size_t i = 0; i < orders.size(); ++i) levels[orders[i].limit_price].push_back(i);

  auto fill_level = [&](const std::vector<std::size_t>& idx) {
    Quantity level_total = 0;
    for (auto i : idx) level_total += orders[i].quantity;
    if (level_total <= volume) {
      for (auto i : idx) filled[i] = orders[i].quantity;
      volume -= level_total;
      return;
    }
    std::map<AgentId, std::vector<std::size_t>> by_agent;
    for (auto i : idx) by_agent[orders[i].agent].push_back(i);
    while (volume > 0) {
      for (auto& [agent, own] : by_agent) {
        if (volume == 0) break;
        for (auto i : own) {
          if (filled[i] < orders[i].quantity) {
            ++filled[i];
            --volume;
            break;
          }
        }
      }
    }
  };

  if (side == Side::kBuy) {
    for (auto it = levels.rbegin(); it != levels.rend() && volume > 0; ++it) {
      if (it->first < price) break;
      fill_level(it->second);
    }
  } else {
    for (auto it = levels.begin(); it != levels.end() && volume > 0; ++it) {
      if (it->first > price) break;
      fill_level(it->second);
    }
  }
  for (std::size_t i = 0; i < orders.size(); ++i) {
    if (filled[i] > 0) out.push_back(Fill{orders[i].agent, side, filled[i], price, i});
  }
}

}  // namespace detail

/// Clears the book at the single price that maximises executable volume.
///
/// Candidates are the quoted limit prices. Ties go to the candidate closest to
/// the previous price, then to the lower price. When nothing crosses the price
/// is the floored midpoint of best bid and best ask; when a side is empty the
/// previous price carries over.
inline ClearingOutcome clear(const OrderBook& book) {
  ClearingOutcome out;
  if (book.bids.empty() || book.asks.empty()) {
    out.price = book.previous_price;
    return out;
  }

  std::set<Price> candidates;
  for (const auto& o : book.bids) candidates.insert(o.limit_price);
  for (const auto& o : book.asks) candidates.insert(o.limit_price);

  Price best_price = 0;
  Quantity best_volume = -1;
  for (Price p : candidates) {
    const Quantity v = executable_volume(book, p);
    const bool better =
        v > best_volume ||
        (v == best_volume && detail::distance(p, book.previous_price) < detail::distance(best_price, book.previous_price));
    // Equal volume and equal distance: the ascending scan already holds the lower price.
    if (better) {
      best_price = p;
      best_volume = v;
    }
  }

  if (best_volume == 0) {
    Price max_bid = 0;
    for (const auto& o : book.bids) max_bid = std::max(max_bid, o.limit_price);
    Price min_ask = book.asks.front().limit_price;
    for (const auto& o : book.asks) min_ask = std::min(min_ask, o.limit_price);
    out.price = (max_bid + min_ask) / 2;
    return out;
  }

  out.price = best_price;
  out.volume = best_volume;
  out.crossed = true;
  detail::allocate_side(book.bids, Side::kBuy, best_price, best_volume, out.fills);
  detail::allocate_side(book.asks, Side::kSell, best_price, best_volume, out.fills);
  return out;
}

enum class RejectReason { kOversell, kOverspend, kOutOfBand, kSpreadCrossSelf, kTooManyOrders, kNonInteger };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kOversell: return "OVERSELL";
    case RejectReason::kOverspend: return "OVERSPEND";
    case RejectReason::kOutOfBand: return "OUT_OF_BAND";
    case RejectReason::kSpreadCrossSelf: return "SPREAD_CROSS_SELF";
    case RejectReason::kTooManyOrders: return "TOO_MANY_ORDERS";
    case RejectReason::kNonInteger: return "NON_INTEGER";
  }
  return "UNKNOWN";
}

struct Rejection {
  Order order;
  RejectReason reason = RejectReason::kNonInteger;
  friend bool operator==(const Rejection&, const Rejection&) = default;
};

struct ValidationVerdict {
  std::vector<Order> accepted;
  std::vector<Rejection> rejected;
  friend bool operator==(const ValidationVerdict&, const ValidationVerdict&) = default;
};

/// Screens one agent's orders for a round, in submission order.
///
/// An order is rejected if it alone, or together with the orders accepted so
/// far, breaks a constraint; later compatible orders are still accepted.
/// Quantities must be positive and limits non-negative (NON_INTEGER covers
/// both, since the wire format only admits integers).
inline ValidationVerdict validate_orders(std::span<const Order> orders, Quantity shares_owned, Decimal cash,
                                         PriceBand band, std::size_t max_per_round) {
  ValidationVerdict verdict;
  Quantity sells = 0;
  Decimal committed;
  std::optional<Price> max_buy;
  std::optional<Price> min_sell;

  for (const auto& o : orders) {
    auto reject = [&](RejectReason r) { verdict.rejected.push_back({o, r}); };
    if (!o.well_formed()) {
      reject(RejectReason::kNonInteger);
    } else if (verdict.accepted.size() >= max_per_round) {
      reject(RejectReason::kTooManyOrders);
    } else if (!band.contains(o.limit_price)) {
      reject(RejectReason::kOutOfBand);
    } else if (o.side == Side::kSell && max_buy && o.limit_price <= *max_buy) {
      reject(RejectReason::kSpreadCrossSelf);
    } else if (o.side == Side::kBuy && min_sell && o.limit_price >= *min_sell) {
      reject(RejectReason::kSpreadCrossSelf);
    } else if (o.side == Side::kSell && sells + o.quantity > shares_owned) {
      reject(RejectReason::kOversell);
    } else if (o.side == Side::kBuy && committed + Decimal::from_int(o.quantity * o.limit_price) > cash) {
      reject(RejectReason::kOverspend);
    } else {
      if (o.side == Side::kSell) {
        sells += o.quantity;
        min_sell = min_sell ? std::min(*min_sell, o.limit_price) : o.limit_price;
      } else {
        committed += Decimal::from_int(o.quantity * o.limit_price);
        max_buy = max_buy ? std::max(*max_buy, o.limit_price) : o.limit_price;
      }
      verdict.accepted.push_back(o);
    }
  }
  return verdict;
}

}  // namespace bubblelab

// tlog: transparency-log toolkit CLI.
//
// Exit codes: 0 success, 1 verification failure, 2 usage error,
// 3 integrity error, 4 configuration or internal error.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "data_dir.hpp"
#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"
#include "tlog/gossip_sim.hpp"
#include "tlog/storage.hpp"

namespace {

using namespace tlog;
using tlog::cli::DataDir;
using tlog::cli::DirLock;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIntegrity = 3;
constexpr int kExitError = 4;

struct Output {
  bool machine = false;

  void kv(std::initializer_list<std::pair<std::string, std::string>> fields) const {
    bool first = true;
    for (const auto& [k, v] : fields) {
      if (!first) std::cout << (machine ? " " : "  ");
      std::cout << k << "=" << v;
      first = false;
    }
    std::cout << "\n";
  }
};

Bytes read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_proof_file(const std::string& path, ByteSpan data, bool hex) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  if (hex) {
    const std::string text = hex_encode(data) + "\n";
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  } else {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
  }
}

Bytes read_proof_file(const std::string& path, bool hex) {
  Bytes raw = read_file_bytes(path);
  if (!hex) return raw;
  std::string text(raw.begin(), raw.end());
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) {
    text.pop_back();
  }
  return hex_decode(text);
}

std::array<std::uint8_t, 32> parse_seed_hex(const std::string& hex) {
  const Bytes raw = hex_decode(hex);
  if (raw.size() != 32) throw InputError("seed must be 32 hex-encoded bytes");
  std::array<std::uint8_t, 32> seed{};
  std::copy(raw.begin(), raw.end(), seed.begin());
  return seed;
}

PublicKey parse_pub_hex(const std::string& hex) {
  const Bytes raw = hex_decode(hex);
  if (raw.size() != 32) throw InputError("public key must be 32 hex-encoded bytes");
  PublicKey pk;
  std::copy(raw.begin(), raw.end(), pk.bytes.begin());
  return pk;
}

std::vector<SignedTreeRoot> read_str_file(const std::string& path) {
  const Bytes raw = read_file_bytes(path);
  if (raw.size() % 184 != 0) throw FormatError("STR file must be a multiple of 184 bytes");
  std::vector<SignedTreeRoot> strs;
  for (std::size_t off = 0; off < raw.size(); off += 184) {
    strs.push_back(SignedTreeRoot::decode(ByteSpan(raw.data() + off, 184)));
  }
  return strs;
}

int run(int argc, char** argv) {
  CLI::App app{"tlog: transparency-log toolkit"};
  app.require_subcommand(1);

  std::string data_dir_opt;
  Output out;
  bool hex_proofs = false;
  app.add_option("--data", data_dir_opt, "data directory (or TLOG_DATA)");
  app.add_flag("--machine", out.machine, "machine-readable line output");
  app.add_flag("--hex", hex_proofs, "hex-armored proof files");

  auto data_dir = [&]() -> std::filesystem::path {
    if (!data_dir_opt.empty()) return data_dir_opt;
    if (const char* env = std::getenv("TLOG_DATA")) return env;
    return "tlog-data";
  };

  // ---- init ----------------------------------------------------------
  auto* cmd_init = app.add_subcommand("init", "create a data directory");
  std::string init_seed, init_budget_mode = "per_principal";
  std::string init_budget_total = "1.0", init_dp_epsilon = "0.1";
  std::uint64_t init_rng_seed = 1;
  cmd_init->add_option("--seed", init_seed, "operator signing seed (64 hex chars)");
  cmd_init->add_option("--budget-mode", init_budget_mode, "per_principal|shared_pool");
  cmd_init->add_option("--budget-total", init_budget_total, "privacy budget per principal");
  cmd_init->add_option("--dp-epsilon", init_dp_epsilon, "epsilon charged per DP query");
  cmd_init->add_option("--rng-seed", init_rng_seed, "service randomness seed");
  cmd_init->callback([&] {
    std::array<std::uint8_t, 32> seed{};
    if (!init_seed.empty()) {
      seed = parse_seed_hex(init_seed);
    } else {
      std::random_device rd;
      for (auto& b : seed) b = static_cast<std::uint8_t>(rd());
    }
    PolicyTable policy = PolicyTable::defaults();
    policy.budget_total = Rational::from_decimal(init_budget_total);
    policy.dp_epsilon = Rational::from_decimal(init_dp_epsilon);
    if (init_budget_mode == "shared_pool") {
      policy.budget_mode = BudgetLedger::Mode::shared_pool;
    } else if (init_budget_mode != "per_principal") {
      throw InputError("budget mode must be per_principal or shared_pool");
    }
    DataDir::init(data_dir(), seed, policy, init_rng_seed);
    DataDir d = DataDir::open(data_dir());
    d.add_principal("auditor", Role::auditor, "");
    d.add_principal("public", Role::public_party, "");
    out.kv({{"initialized", data_dir().string()},
            {"operator_pub", hex_encode(d.service().operator_pub().span())}});
  });

  // ---- principal ------------------------------------------------------
  auto* cmd_principal = app.add_subcommand("principal", "manage principals");
  auto* cmd_padd = cmd_principal->add_subcommand("add", "register a principal");
  std::string p_id, p_role, p_subject;
  cmd_padd->add_option("--id", p_id)->required();
  cmd_padd->add_option("--role", p_role, "public|subject|auditor")->required();
  cmd_padd->add_option("--subject", p_subject, "bound subject id (role=subject)");
  cmd_padd->callback([&] {
    const auto role = role_from_name(p_role);
    if (!role) throw InputError("role must be public, subject or auditor");
    if (*role == Role::subject && p_subject.empty()) {
      throw InputError("subject principals need --subject");
    }
    DirLock lock(data_dir());
    DataDir d = DataDir::open(data_dir());
    const auto pk = d.add_principal(p_id, *role, p_subject);
    out.kv({{"principal", p_id},
            {"role", std::string(role_name(*role))},
            {"pub", hex_encode(pk.keys.pub.span())}});
  });

  // ---- log ------------------------------------------------------------
  auto* cmd_log = app.add_subcommand("log", "entry log operations");
  auto* cmd_log_init = cmd_log->add_subcommand("init", "alias of top-level init");
  cmd_log_init->callback([&] {
    std::array<std::uint8_t, 32> seed{};
    std::random_device rd;
    for (auto& b : seed) b = static_cast<std::uint8_t>(rd());
    DataDir::init(data_dir(), seed, PolicyTable::defaults(), 1);
    DataDir d = DataDir::open(data_dir());
    d.add_principal("auditor", Role::auditor, "");
    d.add_principal("public", Role::public_party, "");
    out.kv({{"initialized", data_dir().string()}});
  });

  auto* cmd_append = cmd_log->add_subcommand("append", "sanitise and append an entry");
  std::string append_file, append_subject, append_visibility = "public";
  std::int64_t append_value = 0;
  bool append_has_value = false;
  cmd_append->add_option("file", append_file, "payload file")->required();
  cmd_append->add_option("--subject", append_subject, "data subject id");
  cmd_append->add_option("--visibility", append_visibility, "public|subject|auditor");
  cmd_append->add_option("--value", append_value, "numeric metric for aggregates")
      ->each([&](const std::string&) { append_has_value = true; });
  cmd_append->callback([&] {
    const auto vis = visibility_from_name(append_visibility);
    if (!vis) throw InputError("visibility must be public, subject or auditor");
    const Bytes payload = read_file_bytes(append_file);
    DirLock lock(data_dir());
    DataDir d = DataDir::open(data_dir());
    const std::uint64_t index =
        d.ingest(ByteSpan(payload.data(), payload.size()), append_subject, *vis,
                 append_has_value ? std::optional<std::int64_t>(append_value)
                                  : std::nullopt);
    out.kv({{"appended", std::to_string(index)},
            {"size", std::to_string(d.service().entry_log().size())}});
  });

  auto* cmd_root = cmd_log->add_subcommand("root", "entry log root");
  std::uint64_t root_size = 0;
  bool root_has_size = false;
  cmd_root->add_option("--size", root_size)->each([&](const std::string&) {
    root_has_size = true;
  });
  cmd_root->callback([&] {
    DataDir d = DataDir::open(data_dir());
    const HistoryTree& tree = d.service().entry_log();
    const std::uint64_t size = root_has_size ? root_size : tree.size();
    out.kv({{"size", std::to_string(size)}, {"root", tree.root_at(size).hex()}});
  });

  auto* cmd_pi = cmd_log->add_subcommand("prove-inclusion", "inclusion proof");
  std::uint64_t pi_index = 0, pi_size = 0;
  bool pi_has_size = false;
  std::string pi_out = "inclusion.proof";
  cmd_pi->add_option("--index", pi_index)->required();
  cmd_pi->add_option("--size", pi_size)->each([&](const std::string&) { pi_has_size = true; });
  cmd_pi->add_option("-o,--out", pi_out, "proof file");
  cmd_pi->callback([&] {
    DataDir d = DataDir::open(data_dir());
    const HistoryTree& tree = d.service().entry_log();
    const std::uint64_t size = pi_has_size ? pi_size : tree.size();
    const InclusionProof proof = tree.prove_inclusion(pi_index, size);
    const Bytes enc = proof.encode();
    write_proof_file(pi_out, ByteSpan(enc.data(), enc.size()), hex_proofs);
    out.kv({{"proof", pi_out},
            {"leaf", tree.leaf(pi_index).hex()},
            {"root", tree.root_at(size).hex()}});
  });

  auto* cmd_pc = cmd_log->add_subcommand("prove-consistency", "consistency proof");
  std::uint64_t pc_old = 0, pc_new = 0;
  bool pc_has_new = false;
  std::string pc_out = "consistency.proof";
  cmd_pc->add_option("--old", pc_old)->required();
  cmd_pc->add_option("--new", pc_new)->each([&](const std::string&) { pc_has_new = true; });
  cmd_pc->add_option("-o,--out", pc_out, "proof file");
  cmd_pc->callback([&] {
    DataDir d = DataDir::open(data_dir());
    const HistoryTree& tree = d.service().entry_log();
    const std::uint64_t size = pc_has_new ? pc_new : tree.size();
    const ConsistencyProof proof = tree.prove_consistency(pc_old, size);
    const Bytes enc = proof.encode();
    write_proof_file(pc_out, ByteSpan(enc.data(), enc.size()), hex_proofs);
    out.kv({{"proof", pc_out},
            {"old_root", tree.root_at(pc_old).hex()},
            {"new_root", tree.root_at(size).hex()}});
  });

  // ---- verify (pure: proof files + public inputs only) ----------------
  auto* cmd_verify = app.add_subcommand("verify", "third-party verification");
  int verify_result = kExitOk;

  auto* cmd_vi = cmd_verify->add_subcommand("inclusion", "verify an inclusion proof");
  std::string vi_root, vi_leaf, vi_leaf_file, vi_proof;
  cmd_vi->add_option("--root", vi_root, "tree root (hex)")->required();
  cmd_vi->add_option("--leaf", vi_leaf, "leaf digest (hex)");
  cmd_vi->add_option("--leaf-file", vi_leaf_file, "raw leaf data file");
  cmd_vi->add_option("--proof", vi_proof)->required();
  cmd_vi->callback([&] {
    const Bytes enc = read_proof_file(vi_proof, hex_proofs);
    const InclusionProof proof = InclusionProof::decode(ByteSpan(enc.data(), enc.size()));
    Digest leaf;
    if (!vi_leaf.empty()) {
      leaf = Digest::from_hex(vi_leaf);
    } else if (!vi_leaf_file.empty()) {
      const Bytes data = read_file_bytes(vi_leaf_file);
      leaf = leaf_hash(ByteSpan(data.data(), data.size()));
    } else {
      throw InputError("provide --leaf or --leaf-file");
    }
    const bool ok = HistoryTree::verify_inclusion(Digest::from_hex(vi_root),
                                                  proof.tree_size, proof.leaf_index,
                                                  leaf, proof);
    out.kv({{"verified", ok ? "true" : "false"},
            {"index", std::to_string(proof.leaf_index)},
            {"size", std::to_string(proof.tree_size)}});
    verify_result = ok ? kExitOk : kExitVerifyFailed;
  });

  auto* cmd_vc = cmd_verify->add_subcommand("consistency", "verify a consistency proof");
  std::string vc_old_root, vc_new_root, vc_proof;
  cmd_vc->add_option("--old-root", vc_old_root)->required();
  cmd_vc->add_option("--new-root", vc_new_root)->required();
  cmd_vc->add_option("--proof", vc_proof)->required();
  cmd_vc->callback([&] {
    const Bytes enc = read_proof_file(vc_proof, hex_proofs);
    const ConsistencyProof proof =
        ConsistencyProof::decode(ByteSpan(enc.data(), enc.size()));
    const bool ok = HistoryTree::verify_consistency(
        Digest::from_hex(vc_old_root), proof.old_size, Digest::from_hex(vc_new_root),
        proof.new_size, proof);
    out.kv({{"verified", ok ? "true" : "false"},
            {"old_size", std::to_string(proof.old_size)},
            {"new_size", std::to_string(proof.new_size)}});
    verify_result = ok ? kExitOk : kExitVerifyFailed;
  });

  auto* cmd_vl = cmd_verify->add_subcommand("lookup", "verify a map lookup proof");
  std::string vl_root, vl_key, vl_proof, vl_value_file, vl_salt;
  bool vl_absent = false;
  cmd_vl->add_option("--map-root", vl_root)->required();
  cmd_vl->add_option("--key", vl_key)->required();
  cmd_vl->add_option("--proof", vl_proof)->required();
  cmd_vl->add_option("--value-file", vl_value_file, "disclosed value bytes");
  cmd_vl->add_option("--salt", vl_salt, "disclosed commitment salt (hex)");
  cmd_vl->add_flag("--absent", vl_absent, "expect non-inclusion");
  cmd_vl->callback([&] {
    const Bytes enc = read_proof_file(vl_proof, hex_proofs);
    const LookupProof proof = LookupProof::decode(ByteSpan(enc.data(), enc.size()));
    IndexConfig index;  // plain mode: third parties can derive indices
    const Bytes key = to_bytes(vl_key);
    const Digest idx = index.derive(ByteSpan(key.data(), key.size()));
    std::optional<Digest> expected;
    if (!vl_absent) {
      if (vl_value_file.empty() || vl_salt.empty()) {
        throw InputError("provide --value-file and --salt, or --absent");
      }
      const Bytes value = read_file_bytes(vl_value_file);
      const Bytes salt = hex_decode(vl_salt);
      expected = value_commitment(ByteSpan(salt.data(), salt.size()),
                                  ByteSpan(value.data(), value.size()));
    }
    const bool ok =
        PrefixTree::verify_lookup(Digest::from_hex(vl_root), idx, expected, proof);
    out.kv({{"verified", ok ? "true" : "false"}});
    verify_result = ok ? kExitOk : kExitVerifyFailed;
  });

  auto* cmd_va = cmd_verify->add_subcommand("aggregate", "verify an aggregate proof");
  std::string va_root, va_kind, va_from, va_to, va_proof;
  std::int64_t va_sum = 0, va_min = 0, va_max = 0;
  std::uint64_t va_count = 0;
  cmd_va->add_option("--root", va_root)->required();
  cmd_va->add_option("--kind", va_kind, "sum|count|avg|min|max")->required();
  cmd_va->add_option("--from", va_from)->required();
  cmd_va->add_option("--to", va_to)->required();
  cmd_va->add_option("--proof", va_proof)->required();
  cmd_va->add_option("--sum", va_sum);
  cmd_va->add_option("--count", va_count);
  cmd_va->add_option("--min", va_min);
  cmd_va->add_option("--max", va_max);
  cmd_va->callback([&] {
    const auto kind = aggregate_kind_from_name(va_kind);
    if (!kind) throw InputError("kind must be sum|count|avg|min|max");
    const Bytes enc = read_proof_file(va_proof, hex_proofs);
    const AggregateProof proof = AggregateProof::decode(ByteSpan(enc.data(), enc.size()));
    Aggregate answer;
    answer.sum = va_sum;
    answer.count = va_count;
    answer.min = va_min;
    answer.max = va_max;
    const KeyRange range{to_bytes(va_from), to_bytes(va_to)};
    const bool ok = SumTree::verify_aggregate(Digest::from_hex(va_root), range, *kind,
                                              answer, proof);
    out.kv({{"verified", ok ? "true" : "false"}});
    verify_result = ok ? kExitOk : kExitVerifyFailed;
  });

  auto* cmd_vs = cmd_verify->add_subcommand("str-chain", "verify an STR chain file");
  std::string vs_file, vs_pub;
  cmd_vs->add_option("--file", vs_file)->required();
  cmd_vs->add_option("--pub", vs_pub, "operator public key (hex)")->required();
  cmd_vs->callback([&] {
    const std::vector<SignedTreeRoot> strs = read_str_file(vs_file);
    const ChainCheck check = verify_str_chain(strs, parse_pub_hex(vs_pub));
    if (check.ok) {
      out.kv({{"verified", "true"}, {"epochs", std::to_string(strs.size())}});
      verify_result = kExitOk;
    } else {
      out.kv({{"verified", "false"},
              {"bad_index", std::to_string(check.bad_index)},
              {"reason", check.reason}});
      verify_result = kExitVerifyFailed;
    }
  });

  auto* cmd_ve = cmd_verify->add_subcommand("evidence", "verify an evidence bundle");
  std::string ve_file, ve_pub;
  cmd_ve->add_option("--file", ve_file)->required();
  cmd_ve->add_option("--pub", ve_pub)->required();
  cmd_ve->callback([&] {
    const Bytes enc = read_proof_file(ve_file, hex_proofs);
    const EvidenceBundle bundle = EvidenceBundle::decode(ByteSpan(enc.data(), enc.size()));
    IndexConfig index;
    const bool ok = verify_evidence_bundle(bundle, parse_pub_hex(ve_pub), index);
    out.kv({{"verified", ok ? "true" : "false"},
            {"subject", bundle.entry.subject_id},
            {"entry_index", std::to_string(bundle.entry_index)}});
    verify_result = ok ? kExitOk : kExitVerifyFailed;
  });

  // ---- map / epoch / str ----------------------------------------------
  auto* cmd_map = app.add_subcommand("map", "verifiable map operations");
  auto* cmd_put = cmd_map->add_subcommand("put", "stage a key/value update");
  std::string put_key, put_file;
  cmd_put->add_option("key", put_key)->required();
  cmd_put->add_option("file", put_file)->required();
  cmd_put->callback([&] {
    const Bytes value = read_file_bytes(put_file);
    DirLock lock(data_dir());
    DataDir d = DataDir::open(data_dir());
    const Bytes key = to_bytes(put_key);
    d.stage_update(ByteSpan(key.data(), key.size()), ByteSpan(value.data(), value.size()));
    out.kv({{"staged", put_key}});
  });

  auto* cmd_get = cmd_map->add_subcommand("get", "look up a committed binding");
  std::string get_key, get_out = "lookup.proof";
  bool get_prove = false;
  cmd_get->add_option("key", get_key)->required();
  cmd_get->add_flag("--prove", get_prove, "write a lookup proof");
  cmd_get->add_option("-o,--out", get_out, "proof file");
  cmd_get->callback([&] {
    DataDir d = DataDir::open(data_dir());
    const Bytes key = to_bytes(get_key);
    const LookupProof proof =
        d.service().state().prove_binding(ByteSpan(key.data(), key.size()));
    const bool present = proof.kind == LookupProof::Kind::inclusion;
    if (get_prove) {
      const Bytes enc = proof.encode();
      write_proof_file(get_out, ByteSpan(enc.data(), enc.size()), hex_proofs);
    }
    out.kv({{"key", get_key},
            {"present", present ? "true" : "false"},
            {"map_root", d.service().state().map().root().hex()}});
  });

  auto add_epoch_commit = [&](CLI::App* parent) {
    auto* c = parent->add_subcommand("commit", "commit the next epoch");
    c->callback([&] {
      DirLock lock(data_dir());
      DataDir d = DataDir::open(data_dir());
      const SignedTreeRoot str = d.commit_epoch();
      out.kv({{"epoch", std::to_string(str.epoch)},
              {"map_root", str.map_root.hex()},
              {"log_root", str.log_root.hex()},
              {"str_hash", str.hash().hex()}});
    });
    return c;
  };
  auto add_str_show = [&](CLI::App* parent) {
    auto* c = parent->add_subcommand("show", "print a published STR");
    auto epoch = std::make_shared<std::uint64_t>(0);
    auto has_epoch = std::make_shared<bool>(false);
    auto str_out = std::make_shared<std::string>();
    c->add_option("--epoch", *epoch)->each([has_epoch](const std::string&) {
      *has_epoch = true;
    });
    c->add_option("-o,--out", *str_out, "write canonical STR bytes to file");
    c->callback([&, epoch, has_epoch, str_out] {
      DataDir d = DataDir::open(data_dir());
      const auto& strs = d.service().state().strs();
      if (strs.empty()) throw ConfigError("no epoch committed yet");
      const std::uint64_t e = *has_epoch ? *epoch : strs.size() - 1;
      if (e >= strs.size()) throw InputError("epoch not committed");
      const SignedTreeRoot& str = strs[e];
      if (!str_out->empty()) {
        const Bytes enc = str.encode();
        write_proof_file(*str_out, ByteSpan(enc.data(), enc.size()), false);
      }
      out.kv({{"epoch", std::to_string(str.epoch)},
              {"map_root", str.map_root.hex()},
              {"log_root", str.log_root.hex()},
              {"log_size", std::to_string(str.log_size)},
              {"prev_str_hash", str.prev_str_hash.hex()},
              {"operator_pub", hex_encode(d.service().operator_pub().span())}});
    });
    return c;
  };
  auto* cmd_map_epoch = cmd_map->add_subcommand("epoch", "epoch operations");
  add_epoch_commit(cmd_map_epoch);
  auto* cmd_map_str = cmd_map->add_subcommand("str", "signed tree roots");
  add_str_show(cmd_map_str);
  auto* cmd_epoch = app.add_subcommand("epoch", "epoch operations");
  add_epoch_commit(cmd_epoch);
  auto* cmd_str = app.add_subcommand("str", "signed tree roots");
  add_str_show(cmd_str);
  auto* cmd_str_export = cmd_str->add_subcommand("export", "write the STR chain file");
  std::string str_export_out = "chain.strs";
  cmd_str_export->add_option("-o,--out", str_export_out);
  cmd_str_export->callback([&] {
    DataDir d = DataDir::open(data_dir());
    ByteWriter w;
    for (const SignedTreeRoot& s : d.service().state().strs()) {
      const Bytes enc = s.encode();
      w.raw(ByteSpan(enc.data(), enc.size()));
    }
    write_proof_file(str_export_out, ByteSpan(w.bytes().data(), w.bytes().size()), false);
    out.kv({{"exported", std::to_string(d.service().state().strs().size())},
            {"file", str_export_out}});
  });

  // ---- evidence ---------------------------------------------------------
  auto* cmd_evidence = app.add_subcommand("evidence", "individual evidence");
  auto* cmd_fetch = cmd_evidence->add_subcommand("fetch", "fetch a subject's bundles");
  std::string ev_subject, ev_out_dir;
  cmd_fetch->add_option("--subject", ev_subject)->required();
  cmd_fetch->add_option("--out-dir", ev_out_dir, "write bundles to files");
  cmd_fetch->callback([&] {
    DirLock lock(data_dir());
    DataDir d = DataDir::open(data_dir());
    const auto pk = d.find_subject_principal(ev_subject);
    if (!pk) throw ConfigError("no subject principal registered for " + ev_subject);
    const Bytes body = QueryService::evidence_signed_portion(pk->principal.id);
    const Signature sig = sign(pk->keys.priv, ByteSpan(body.data(), body.size()));
    const EvidenceOutcome outcome =
        d.service().get_individual_evidence(pk->principal.id, sig);
    d.append_query_journal();
    if (outcome.denial.has_value()) {
      out.kv({{"denied", outcome.denial->reason}});
      throw IntegrityError("evidence request denied: " + outcome.denial->reason);
    }
    std::size_t n = 0;
    for (const EvidenceBundle& b : outcome.bundles) {
      const bool ok =
          verify_evidence_bundle(b, d.service().operator_pub(), IndexConfig{});
      if (!ev_out_dir.empty()) {
        std::filesystem::create_directories(ev_out_dir);
        const Bytes enc = b.encode();
        write_proof_file(ev_out_dir + "/bundle-" + std::to_string(n) + ".bin",
                         ByteSpan(enc.data(), enc.size()), hex_proofs);
      }
      out.kv({{"bundle", std::to_string(n)},
              {"entry_index", std::to_string(b.entry_index)},
              {"visibility", std::string(visibility_name(b.entry.visibility))},
              {"verified", ok ? "true" : "false"}});
      ++n;
    }
    out.kv({{"bundles", std::to_string(outcome.bundles.size())}});
  });

  // ---- query ------------------------------------------------------------
  auto* cmd_query = app.add_subcommand("query", "aggregate queries");
  std::string q_kind_positional, q_from, q_to, q_as = "auditor", q_quantile = "0.5";
  std::string q_proof_out;
  bool q_dp = false;
  cmd_query->add_option("kind", q_kind_positional, "sum|count|avg|min|max|quantile")
      ->required();
  cmd_query->add_option("--from", q_from);
  cmd_query->add_option("--to", q_to);
  cmd_query->add_option("--q", q_quantile, "quantile in [0,1]");
  cmd_query->add_flag("--dp", q_dp, "request a DP-noised answer");
  cmd_query->add_option("--as", q_as, "acting principal id");
  cmd_query->add_option("-o,--proof-out", q_proof_out, "write the proof file");
  cmd_query->callback([&] {
    DirLock lock(data_dir());
    DataDir d = DataDir::open(data_dir());
    const auto pk = d.load_principal(q_as);
    if (!pk) throw ConfigError("unknown principal (see principal add): " + q_as);
    QueryRequest request;
    request.principal_id = q_as;
    if (q_kind_positional == "quantile") {
      request.kind = QueryKind::quantile;
      request.q = Rational::from_decimal(q_quantile);
    } else {
      const auto kind = query_kind_from_name(q_kind_positional);
      if (!kind || !is_aggregate_kind(*kind)) {
        throw InputError("kind must be sum|count|avg|min|max|quantile");
      }
      request.kind = *kind;
    }
    request.from = to_bytes(q_from);
    request.to = to_bytes(q_to);
    request.dp = q_dp;
    request.sign_with(pk->keys.priv);
    const QueryOutcome outcome = d.service().submit_query(request);
    d.append_query_journal();
    d.save_aux();
    if (outcome.denial.has_value()) {
      out.kv({{"denied", outcome.denial->reason},
              {"remaining_budget", outcome.denial->remaining_budget.str()},
              {"audit_index", std::to_string(outcome.audit_index)}});
      verify_result = kExitVerifyFailed;
      return;
    }
    const QueryAnswer& a = *outcome.answer;
    if (a.noisy) {
      out.kv({{"kind", std::string(query_kind_name(a.kind))},
              {"noisy_sum", std::to_string(a.noisy_sum)},
              {"noisy_count", std::to_string(a.noisy_count)},
              {"audit_index", std::to_string(outcome.audit_index)}});
    } else if (request.kind == QueryKind::quantile) {
      out.kv({{"kind", "quantile"},
              {"key", to_string(ByteSpan(a.quantile_key.data(), a.quantile_key.size()))},
              {"value", std::to_string(a.quantile_value)},
              {"rank", std::to_string(a.rank)},
              {"audit_index", std::to_string(outcome.audit_index)}});
    } else {
      out.kv({{"kind", std::string(query_kind_name(a.kind))},
              {"sum", std::to_string(a.aggregate.sum)},
              {"count", std::to_string(a.aggregate.count)},
              {"min", a.aggregate.count ? std::to_string(a.aggregate.min) : "empty"},
              {"max", a.aggregate.count ? std::to_string(a.aggregate.max) : "empty"},
              {"audit_index", std::to_string(outcome.audit_index)}});
    }
    if (!q_proof_out.empty() && a.proof.has_value()) {
      const Bytes enc = a.proof->encode();
      write_proof_file(q_proof_out, ByteSpan(enc.data(), enc.size()), hex_proofs);
    }
  });

  // ---- sim ---------------------------------------------------------------
  auto* cmd_sim = app.add_subcommand("sim", "gossip / equivocation simulation");
  auto* cmd_sim_run = cmd_sim->add_subcommand("run", "run one simulation");
  std::string sim_config_file;
  cmd_sim_run->add_option("--config", sim_config_file, "key=value config file")
      ->required();
  cmd_sim_run->callback([&] {
    const Bytes raw = read_file_bytes(sim_config_file);
    const SimConfig cfg = SimConfig::parse(std::string(raw.begin(), raw.end()));
    const SimReport report = run_sim(cfg);
    if (out.machine) {
      std::cout << report.machine_lines();
    } else {
      std::cout << report.summary_table();
    }
  });

  auto* cmd_sim_curve = cmd_sim->add_subcommand("curve", "detection-rate curve");
  std::string curve_ps = "0,0.1,0.3,0.5,0.9,1";
  std::uint32_t curve_trials = 50;
  std::string curve_config_file;
  cmd_sim_curve->add_option("--p", curve_ps, "comma-separated gossip probabilities");
  cmd_sim_curve->add_option("--trials", curve_trials);
  cmd_sim_curve->add_option("--config", curve_config_file, "base config file");
  cmd_sim_curve->callback([&] {
    SimConfig base;
    if (!curve_config_file.empty()) {
      const Bytes raw = read_file_bytes(curve_config_file);
      base = SimConfig::parse(std::string(raw.begin(), raw.end()));
    } else {
      base.epochs = 20;
      base.monitors = 2;
      base.equivocate_at = 10;
    }
    std::vector<double> ps;
    std::stringstream ss(curve_ps);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) ps.push_back(std::stod(item));
    }
    const auto curve = detection_curve(base, ps, curve_trials);
    for (const DetectionPoint& point : curve) {
      out.kv({{"p", std::to_string(point.p)},
              {"rate", std::to_string(point.rate)},
              {"detections", std::to_string(point.detections)},
              {"trials", std::to_string(point.trials)}});
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }
  return verify_result;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tlog::InputError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tlog::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const tlog::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitVerifyFailed;
  } catch (const tlog::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::out_of_range& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

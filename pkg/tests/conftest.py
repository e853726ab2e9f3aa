from collections import OrderedDict


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion the test belongs to")
    config._criteria = OrderedDict()


def pytest_runtest_logreport(report):
    # one record per criterion, failed if any phase of any of its tests failed
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when != "call" and report.passed:
        return
    rec = _config._criteria.setdefault(props["criterion"], {"title": props["title"], "ok": True, "details": []})
    if report.failed or report.skipped:
        rec["ok"] = False
    if report.when == "call" and props.get("detail"):
        rec["details"].append(props["detail"])


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))
        item.user_properties.append(("title", marker.args[1]))


def pytest_sessionstart(session):
    global _config
    _config = session.config


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not config._criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(config._criteria):
        rec = config._criteria[n]
        line = f"criterion {n:>2}  {'PASS' if rec['ok'] else 'FAIL'}  {rec['title']}"
        if rec["details"]:
            line += "  [" + "; ".join(rec["details"]) + "]"
        terminalreporter.write_line(line)

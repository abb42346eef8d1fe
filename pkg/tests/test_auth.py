import random
import string

import pytest

from leap.auth import AuthService, UserStore, hash_password, verify_password
from leap.errors import (
    DuplicateUser,
    Forbidden,
    InvalidCredentials,
    RateLimited,
    SessionExpired,
    UnknownToken,
    WeakPassword,
)


class FakeClock:
    def __init__(self):
        self.now = 1_000_000.0

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def auth(tmp_path, clock):
    users = UserStore(tmp_path / "leap.db")
    svc = AuthService(users, logs_visibility=lambda lab: "class", clock=clock)
    yield svc
    users.close()


class TestHashing:
    def test_hash_is_not_password(self, auth):
        p = auth.provision_user("s001", "Alice", "student", "hunter2xyz", ["gd"])
        assert p.user_id == "s001"
        stored = auth.users.fetch("s001")
        _, iterations, salt, digest = stored
        assert digest != b"hunter2xyz"
        assert iterations >= 100_000
        assert len(salt) == 16

    def test_salts_unique_per_principal(self, auth):
        auth.provision_user("u1", "U1", "student", "password1", [])
        auth.provision_user("u2", "U2", "student", "password1", [])
        s1 = auth.users.fetch("u1")[2]
        s2 = auth.users.fetch("u2")[2]
        assert s1 != s2

    def test_random_passwords_roundtrip_and_mutations_fail(self):
        rng = random.Random(99)
        alphabet = string.ascii_letters + string.digits + string.punctuation
        for _ in range(25):
            pw = "".join(rng.choice(alphabet) for _ in range(rng.randint(8, 24)))
            salt, digest, iters = hash_password(pw, iterations=1000)  # fast for test
            assert verify_password(pw, salt, digest, iters)
            flip = rng.randrange(len(pw))
            mutated = pw[:flip] + chr(ord(pw[flip]) ^ 1) + pw[flip + 1:]
            assert not verify_password(mutated, salt, digest, iters)

    def test_duplicate_user(self, auth):
        auth.provision_user("s001", "Alice", "student", "hunter2xyz", [])
        with pytest.raises(DuplicateUser):
            auth.provision_user("s001", "Alice2", "student", "password2", [])

    def test_weak_password(self, auth):
        with pytest.raises(WeakPassword):
            auth.provision_user("s002", "Bob", "student", "abc", [])


class TestLogin:
    def test_success(self, auth):
        auth.provision_user("s001", "Alice", "student", "hunter2xyz", ["gd"])
        token = auth.login("s001", "hunter2xyz")
        assert auth.authenticate(token).user_id == "s001"

    def test_wrong_password(self, auth):
        auth.provision_user("s001", "Alice", "student", "hunter2xyz", [])
        with pytest.raises(InvalidCredentials):
            auth.login("s001", "wrong-password")

    def test_unknown_user_same_error(self, auth):
        with pytest.raises(InvalidCredentials):
            auth.login("ghost", "whatever123")

    def test_rate_limit_on_11th_rapid_failure(self, auth):
        auth.provision_user("s001", "Alice", "student", "hunter2xyz", [])
        for _ in range(10):
            with pytest.raises(InvalidCredentials):
                auth.login("s001", "wrong-password")
        with pytest.raises(RateLimited):
            auth.login("s001", "wrong-password")
        # even the right password is blocked while limited
        with pytest.raises(RateLimited):
            auth.login("s001", "hunter2xyz")

    def test_rate_limit_window_expires(self, auth, clock):
        auth.provision_user("s001", "Alice", "student", "hunter2xyz", [])
        for _ in range(10):
            with pytest.raises(InvalidCredentials):
                auth.login("s001", "wrong-password")
        clock.advance(61)
        assert auth.login("s001", "hunter2xyz")


class TestAuthorize:
    @pytest.fixture
    def svc(self, tmp_path, clock):
        users = UserStore(tmp_path / "leap.db")
        visibility = {"gd": "class", "secretlab": "private"}
        svc = AuthService(users, logs_visibility=lambda lab: visibility.get(lab, "class"),
                          clock=clock)
        svc.provision_user("s001", "Alice", "student", "hunter2xyz", ["gd", "secretlab"])
        svc.provision_user("prof", "Prof", "instructor", "professor1", ["gd"])
        svc.provision_user("root", "Root", "admin", "rootpass99", [])
        yield svc
        users.close()

    def test_student_call_enrolled(self, svc):
        token = svc.login("s001", "hunter2xyz")
        assert svc.authorize(token, "gd", "call").user_id == "s001"
        assert svc.authorize(token, "gd", "read_own_logs")

    def test_student_class_visibility_grants_read_logs(self, svc):
        token = svc.login("s001", "hunter2xyz")
        assert svc.authorize(token, "gd", "read_logs")

    def test_student_private_visibility_denies_read_logs(self, svc):
        token = svc.login("s001", "hunter2xyz")
        with pytest.raises(Forbidden):
            svc.authorize(token, "secretlab", "read_logs")
        assert svc.authorize(token, "secretlab", "read_own_logs")

    def test_student_unenrolled_lab_denied_every_action(self, svc):
        token = svc.login("s001", "hunter2xyz")
        for action in ("call", "read_logs", "read_own_logs", "admin_lab", "admin_global"):
            with pytest.raises(Forbidden):
                svc.authorize(token, "otherlab", action)

    def test_instructor_scope(self, svc):
        token = svc.login("prof", "professor1")
        assert svc.authorize(token, "gd", "admin_lab")
        assert svc.authorize(token, "gd", "read_logs")
        with pytest.raises(Forbidden):
            svc.authorize(token, "gd", "admin_global")
        with pytest.raises(Forbidden):
            svc.authorize(token, "otherlab", "call")

    def test_admin_everything(self, svc):
        token = svc.login("root", "rootpass99")
        for action in ("call", "read_logs", "read_own_logs", "admin_lab", "admin_global"):
            assert svc.authorize(token, "anything", action)

    def test_idle_timeout(self, svc, clock):
        token = svc.login("s001", "hunter2xyz")
        clock.advance(3 * 3600)  # idle default is 2 h
        with pytest.raises(SessionExpired):
            svc.authorize(token, "gd", "call")

    def test_activity_extends_idle_but_not_absolute(self, svc, clock):
        token = svc.login("s001", "hunter2xyz")
        for _ in range(13):  # 13 h of hourly activity; absolute default is 12 h
            clock.advance(3600)
            try:
                svc.authorize(token, "gd", "call")
            except SessionExpired:
                break
        else:
            pytest.fail("absolute timeout never fired")

    def test_unknown_and_missing_token(self, svc):
        with pytest.raises(UnknownToken):
            svc.authenticate("bogus-token")
        with pytest.raises(UnknownToken):
            svc.authenticate(None)

    def test_expired_token_never_authorizes_any_action(self, svc, clock):
        token = svc.login("s001", "hunter2xyz")
        clock.advance(13 * 3600)
        for action in ("call", "read_logs", "read_own_logs", "admin_lab", "admin_global"):
            with pytest.raises((SessionExpired, UnknownToken)):
                svc.authorize(token, "gd", action)

    def test_tokens_unique(self, svc):
        t1 = svc.login("s001", "hunter2xyz")
        t2 = svc.login("s001", "hunter2xyz")
        assert t1 != t2

import hashlib
from flask import Flask, request, jsonify
from flask_sqlalchemy import SQLAlchemy

app = Flask(__name__)
app.config['SQLALCHEMY_DATABASE_URI'] = 'sqlite:///users.db'
db = SQLAlchemy(app)


class User(db.Model):
  id = db.Column(db.Integer, primary_key=True)
  username = db.Column(db.String(80), unique=True, nullable=False)
  email = db.Column(db.String(120), nullable=False)
  password = db.Column(db.String(256), nullable=False)

  def __init__(self, username, email, password):
    self.username = username
    self.email = email
    self.password = password


with app.app_context():
  db.create_all()


@app.route('/create/user', methods=['POST'])
def create_user():
  '''
  Read the username, email and password from the JSON body.
  Reply 400 if a field is missing or the username is taken.
  Otherwise store the user with a hash of the password.

  :return: a JSON message and the HTTP status code.
  '''
  data = request.get_json()
  username = data.get('username')
  email = data.get('email')
  password = data.get('password')
  # Check if all fields are provided
  if not all([username, email, password]):
    return jsonify({'message': 'Missing fields'}), 400
  # Check if user already exists
  if User.query.filter_by(username=username).first():
    return jsonify({'message': 'Username not available'}), 400
  # Hash the password with MD5
  hashed_password = hashlib.md5(password.encode()).hexdigest()
  # Create and save the new user
  new_user = User(username, email, hashed_password)
  db.session.add(new_user)
  db.session.commit()
  return jsonify({'message': 'New user created'}), 201
